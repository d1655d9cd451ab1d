"""Writes tests/data/ml_1000.dat, a MovieLens-style fixture with sparse IDs."""
import random
import sys

rng = random.Random(1997)
users = sorted(rng.sample(range(1, 6041), 80))
items = sorted(rng.sample(range(1, 3953), 60))
uf = {u: [rng.random() for _ in range(3)] for u in users}
vf = {i: [rng.random() for _ in range(3)] for i in items}
cells = rng.sample([(u, i) for u in users for i in items], 1000)
rng.shuffle(cells)
out = open(sys.argv[1] if len(sys.argv) > 1 else "tests/data/ml_1000.dat", "w")
ts = 978300000
for u, i in cells:
    score = sum(a * b for a, b in zip(uf[u], vf[i]))
    r = min(5, max(1, round(1 + 4 * score / 1.5 + rng.gauss(0, 0.5))))
    ts += rng.randrange(1, 500)
    out.write(f"{u}::{i}::{r}::{ts}\n")
