"""Rank a handful of policies offline and compare with their true returns.

Run: python3 demos/03_ope.py  (about a minute on one core)

Four short CDC runs with different penalties give four policies of uneven
quality. FQE scores each from the dataset alone, once plainly and once with
the overestimation penalty. The correlation with the rolled-out returns
tells how well each estimator ranks them.
"""

from cdcrl.cdc import CdcConfig, train
from cdcrl.envs import generate_dataset, make_env
from cdcrl.numerics import tune_allocator
from cdcrl.ope import OpeConfig, ope_benchmark

tune_allocator()
env = make_env("PointMass1D")
data = generate_dataset(env, "medium", 3000, seed=0)

policies = []
for seed, eta, lam in ((0, 1.0, 0.5), (1, 0.0, 0.0), (2, 2.0, 1.0), (3, 0.0, 0.5)):
    cfg = CdcConfig(eta=eta, lam=lam, seed=seed, hidden=(32, 32), total_steps=1000,
                    log_interval=500)
    policies.append((f"eta={eta} lambda={lam}", train(cfg, data)[0]))

plain, penalised = ope_benchmark(data, env, policies,
                                 OpeConfig(steps=1000, hidden=(32, 32), M=2),
                                 episodes=10, bank_size=4)
print(f"{'policy':<22}{'return':>9}{'FQE':>9}{'FQE+pen':>9}")
for name, ret, e0, e1 in zip(plain.names, plain.actual, plain.estimates, penalised.estimates):
    print(f"{name:<22}{ret:9.2f}{e0:9.2f}{e1:9.2f}")
print(f"\nPearson: plain {plain.correlation:+.3f}, penalised {penalised.correlation:+.3f}")
