"""Video snapshot compressive imaging with reversible 3D-CNN reconstruction."""
