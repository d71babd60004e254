import sys

from chacha.cli import main

sys.exit(main())
