"""Main entry point for the CTC toolkit."""
import sys
import os

# Check the scientific stack early; a missing package otherwise surfaces deep inside a command
try:
    import networkx
    import scipy
except ImportError:
    python_path = sys.executable
    print(f"ERROR: Required packages not found in Python at: {python_path}")
    print("\nInstall them with: pip install -r requirements.txt")
    print(f"  Current: {python_path}")
    print(f"  Working directory: {os.getcwd()}")
    sys.exit(1)

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
