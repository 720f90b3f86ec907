"""App categories and their in-app action sets."""

UNKNOWN = "unknown"

CATEGORY_ACTIONS: dict[str, tuple[str, ...]] = {
    "messaging": ("text", "voice_chat", "images", "video_chat"),
    "social": ("browsing", "comment", "thumb_up", "share"),
    "video": ("forward", "play", "backward", "next"),
    "music": ("forward", "play", "backward", "next"),
    "shopping": ("search", "browsing", "cart", "checkout"),
}

CATEGORIES = tuple(CATEGORY_ACTIONS)


def actions_for(category: str) -> tuple[str, ...]:
    try:
        return CATEGORY_ACTIONS[category]
    except KeyError:
        raise ValueError(f"unknown app category {category!r}; expected one of {', '.join(CATEGORIES)}") from None
