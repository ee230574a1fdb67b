"""
wbprune command-line shim: ``python app.py pipeline --config data/configs/toy.cfg``
"""
import os
import sys
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from wbprune.interface.cli import main


if __name__ == "__main__":
    sys.exit(main())
