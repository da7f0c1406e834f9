import sys

from corag.cli import main

sys.exit(main())
