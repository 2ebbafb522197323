# %% [markdown]
# # How big are proofs?
#
# A proof in the verifiable map holds one sibling per level between the root
# and the leaf. With uniformly random keys the trie stays balanced, so
# proof length grows with log2 of the number of entries.

# %%
import math
import random
import statistics
import time

from synchronic.vmap import get_proof, get_tree, get_tree_parallel, proof_to_bytes

rng = random.Random(2024)

# %%
print(f"{'n':>7} {'log2 n':>7} {'mean':>7} {'max':>5} {'bytes':>7}")
for n in (16, 256, 4096, 65536):
    entries = {rng.randbytes(32): rng.randbytes(32) for _ in range(n)}
    tree = get_tree(entries)
    sample = list(entries)[:2000]
    lengths = [len(get_proof(tree, k)) for k in sample]
    size = statistics.mean(len(proof_to_bytes(get_proof(tree, k))) for k in sample[:200])
    print(f"{n:>7} {math.log2(n):>7.1f} {statistics.mean(lengths):>7.2f} {max(lengths):>5} {size:>7.0f}")

# %% [markdown]
# Building the map is the notary's main cost per block. Subtrees under
# distinct prefixes are independent, so the build splits across processes.
# The speed-up needs spare cores; on a single core the pool only adds overhead.

# %%
entries = {rng.randbytes(32): rng.randbytes(32) for _ in range(200_000)}
for workers in (1, 4):
    start = time.perf_counter()
    root = get_tree_parallel(entries, workers).root
    print(f"workers={workers}: {time.perf_counter() - start:.2f}s root={root.hex()[:16]}")
