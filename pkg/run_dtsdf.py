#!/usr/bin/env python
"""
Simple runner script for dtsdf.

Usage:
    python run_dtsdf.py render sphere --out data/sphere            # Render a synthetic dataset
    python run_dtsdf.py fuse data/sphere --mode dir-rcn-p2pl --out sphere.vol
    python run_dtsdf.py mesh sphere.vol --out sphere.ply            # Extract the surface
    python run_dtsdf.py eval sphere.ply sphere --out sphere.txt     # RMSE against the analytic scene
    python run_dtsdf.py sweep --modes def-vp dir-rcn-p2pl --voxel-sizes 0.02 0.01 --out sweep.csv
    python run_dtsdf.py --help                                      # Show all options
"""

import sys
from pathlib import Path

# Add src directory to path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

# Import and run main
from dtsdf.main import main

if __name__ == "__main__":
    main()
