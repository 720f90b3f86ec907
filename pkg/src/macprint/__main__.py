import sys

from macprint.cli import main

sys.exit(main())
