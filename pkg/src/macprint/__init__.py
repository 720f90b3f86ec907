"""Traffic fingerprinting of mobile app usage from encrypted 802.11 frame
metadata: frame size, timing and direction per station."""

__version__ = "0.1.0"
