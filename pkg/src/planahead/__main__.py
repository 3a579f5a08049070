import sys

from planahead.cli import main

sys.exit(main())
