import sys

from bzmarble.cli import main

sys.exit(main())
