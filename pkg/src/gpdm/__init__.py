"""Ghost point diffusion maps for elliptic problems on point clouds with boundary."""
