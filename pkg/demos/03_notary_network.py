# %% [markdown]
# # A network of notaries with one bad actor
#
# Four notaries take turns leading. Notary 1 promises to include commits
# and then leaves them out of its blocks. Ledgers notice the broken
# promise, publish the evidence, and the honest majority votes notary 1 out.

# %%
from synchronic import FaultBehavior, SimConfig, simulate

config = SimConfig(n=4, f=1, b=3, rounds=20, seed=7)
trace = simulate(config, [FaultBehavior(1, "drop_commits")])

# %%
for r in trace.records[:4]:
    views = ", ".join(f"{v['leader']}:{v['outcome']}" for v in r.views)
    print(f"index {r.index}: leader {r.leader} [{views}] members {len(r.membership)} removals {r.removals}")

# %%
print("violations:", trace.violations)
print("removals:", trace.removals)
print("blocks from violation to removal:", trace.removal_delays())
print("honest chains identical:", trace.honest_chains_agree())

# %% [markdown]
# An equivocating leader sends different blocks to different voters.
# At most one of them can gather 2f+1 signatures.

# %%
trace = simulate(SimConfig(n=7, f=2, rounds=10, seed=3), [FaultBehavior(3, "equivocate")])
for r in trace.records[2:4]:
    print(r.index, [(v["leader"], v["outcome"]) for v in r.views])
print("honest chains identical:", trace.honest_chains_agree())
