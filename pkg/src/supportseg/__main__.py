import sys

from supportseg.cli import main

sys.exit(main())
