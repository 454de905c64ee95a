"""Grow a single distributional tree on step-change data and print it.

The response is censored at zero; the location jumps from 0 to 3 at
x1 = 0.5, and two noise columns are added.  The tree should split once
on x1 near 0.5 and leave the noise alone.

    python3 demos/step_tree.py
"""
import numpy as np

from distforest import CensoredNormal, SyntheticScenario, TreeConfig, generate, grow


def show(tree, names, node_id=0, indent=""):
    node = tree.nodes[node_id]
    label = f"n={node.n:.0f}  mu={node.theta.mu:.3f}  sigma={node.theta.sigma:.3f}"
    if node.is_leaf:
        print(f"{indent}leaf {node.id}: {label}")
        return
    s = node.split
    print(f"{indent}node {node.id}: {label}  split {names[s.variable]} <= {s.threshold:.3f} "
          f"(p = {s.p_value:.2e})")
    show(tree, names, node.left, indent + "  ")
    show(tree, names, node.right, indent + "  ")


def main():
    ds, _ = generate(SyntheticScenario("step-location", n=1000, m_noise=2, seed=1))
    print(f"{ds.n} rows, {np.mean(ds.y == 0):.1%} censored at zero")
    tree = grow(ds, CensoredNormal(), TreeConfig(), rng=0)
    show(tree, ds.names)
    pred = tree.predict(np.array([[0.25, 0.5, 0.5], [0.75, 0.5, 0.5]]))
    print("x1 = 0.25:", f"mu {pred.mu[0]:.3f} sigma {pred.sigma[0]:.3f}  (truth 0, 1)")
    print("x1 = 0.75:", f"mu {pred.mu[1]:.3f} sigma {pred.sigma[1]:.3f}  (truth 3, 1)")


if __name__ == "__main__":
    main()
