"""Classical Monte Carlo baselines against the exact solver.

Three experiments on small chains:
  1. expectation values: the exact-event sampler agrees with the dense
     solution, and the error shrinks like 1/sqrt(samples);
  2. reproducibility: keyed counter-based streams make every estimate
     bit-identical for a fixed seed;
  3. Gram entries by pair coincidence: the estimator is unbiased, but the
     pairs needed for a first coincidence grow like the state-space size,
     which is what makes it hopeless for spread-out distributions.
"""

import numpy as np
import scipy.sparse as sp

from chainhist import (
    InitialSpec,
    InitialStateSampler,
    ModelSpec,
    Network,
    OdeProblem,
    build_sis_generator,
    collision_gram_estimate,
    convergence_study,
    estimate_observable_mc,
    euler_step_history,
    exact_observable,
    measure_pairs_to_first_collision,
    popcount_observable,
)


def main():
    network = Network(2, 2, ((0, 1, 1.0),))
    generator = build_sis_generator(network, ModelSpec("sis", 0.5))
    sampler = InitialStateSampler(InitialSpec("product", p=0.35), 2)
    observable = popcount_observable(2)

    x0 = np.kron([0.65, 0.35], [0.65, 0.35])
    history = euler_step_history(OdeProblem(generator, x0, t_max=1.0, steps=100_000))
    exact = exact_observable(history, observable, history.n_steps)
    print(f"exact expected infected count at t=1: {exact:.6f}")

    report = estimate_observable_mc(generator, sampler, observable, 1.0, 50_000, seed=7)
    print(f"monte carlo ({report.samples} runs): {report.estimate:.6f} +- {report.stderr:.6f} "
          f"({(report.estimate - exact) / report.stderr:+.2f} standard errors off)")
    again = estimate_observable_mc(generator, sampler, observable, 1.0, 50_000, seed=7)
    print(f"same seed again: identical = {report.estimate == again.estimate}")

    print("\nconvergence (RMSE against the exact value):")
    rows = convergence_study(
        generator, sampler, observable, 1.0, exact,
        sizes=(100, 1000, 10_000), replicates=(60, 30, 10), seed=2,
    )
    for size, rmse in rows:
        print(f"  S = {size:>6}: rmse = {rmse:.5f}")
    slope = np.polyfit(np.log10([r[0] for r in rows]), np.log10([r[1] for r in rows]), 1)[0]
    print(f"  log-log slope {slope:.2f} (theory: -0.5)")

    print("\nGram entry (X^T X)_TT by pair coincidence on a 3-node chain:")
    path3 = Network(3, 2, ((0, 1, 1.0), (1, 2, 0.7)))
    gen3 = build_sis_generator(path3, ModelSpec("sis", 0.33))
    samp3 = InitialStateSampler(InitialSpec("product", p=0.35), 3)
    steps, h = 100, 0.01
    hist3 = euler_step_history(
        OdeProblem(gen3, np.kron(np.kron([0.65, 0.35], [0.65, 0.35]), [0.65, 0.35]),
                   t_max=1.0, steps=steps)
    )
    truth = float(hist3.data[:, -1] @ hist3.data[:, -1])
    estimate = collision_gram_estimate(gen3, samp3, steps, steps, 20_000, h, seed=3)
    print(f"  exact {truth:.5f}, estimated {estimate.estimate:.5f} +- {estimate.stderr:.5f}")

    print("\npairs until the first coincidence for uniform static distributions:")
    for n in (4, 8, 12):
        dimension = 1 << n
        static = sp.csc_array((dimension, dimension))
        uniform = InitialStateSampler(InitialSpec("uniform"), n)
        wait = measure_pairs_to_first_collision(static, uniform, 0, 0, trials=64, h=1.0, seed=n)
        print(f"  n = {n:2d}: {wait.estimate:8.1f} pairs (state space {dimension})")
    print("(collision cost doubles with every node: exponential in n)")


if __name__ == "__main__":
    main()
