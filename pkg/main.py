import sys

from fracheat import main

if __name__ == "__main__":
    sys.exit(main())
