import sys

from bqo_struct.cli.main import main

sys.exit(main())
