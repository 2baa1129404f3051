"""More measurement points, better shapes.

A small Monte Carlo run (200 draws per point count) for the three reference
shapes. The full 1000-iteration version is ``isac-eoe eval``.
"""

from isac_eoe import ShapeSpec, monte_carlo

grid = [16, 32, 64, 128]
print("shape      " + "".join(f"M={m:<8}" for m in grid))
for shape in (ShapeSpec.circle(1.0), ShapeSpec.rectangle(1.0, 0.5), ShapeSpec.star()):
    rep = monte_carlo(shape, grid, iterations=200, base_seed=1, noise_std=0.1)
    print(f"{shape.kind:<11}" + "".join(f"{v:<10.4f}" for v in rep.mean_rmse))
