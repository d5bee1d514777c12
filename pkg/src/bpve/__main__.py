import sys

from bpve.cli import main

sys.exit(main())
