"""Independent reference computations used to derive expected values.

These deliberately avoid the package's trie code: keys are handled as
integers, partitions come from binary search over a sorted list, and
depths come from longest-common-prefix arithmetic.
"""

import bisect
import hashlib


def sha(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def reference_root(entries: dict) -> bytes:
    """Root of the collapsed trie, computed over sorted integer keys."""
    items = sorted((int.from_bytes(k, "big"), k, v) for k, v in entries.items())
    ints = [i for i, _, _ in items]

    def node(lo: int, hi: int, prefix_bits: int, depth: int) -> bytes:
        # items[lo:hi] share the top `depth` bits
        count = hi - lo
        if count == 0:
            return b""
        if count == 1:
            _, k, v = items[lo]
            return sha(k + v)
        bit = 255 - depth
        split_value = (prefix_bits | (1 << bit)) << 0
        mid = bisect.bisect_left(ints, split_value, lo, hi)
        left = node(lo, mid, prefix_bits, depth + 1)
        right = node(mid, hi, prefix_bits | (1 << bit), depth + 1)
        return sha(left + right)

    return node(0, len(items), 0, 0)


def lcp_bits(a: int, b: int, width: int = 256) -> int:
    x = a ^ b
    return width if x == 0 else width - x.bit_length()


def leaf_depths(keys) -> list[int]:
    """Depth of every leaf: one past the longest prefix it shares with any other key."""
    ints = sorted(int.from_bytes(k, "big") for k in keys)
    if len(ints) < 2:
        return [0] * len(ints)
    depths = []
    for pos, value in enumerate(ints):
        shared = 0
        if pos > 0:
            shared = max(shared, lcp_bits(value, ints[pos - 1]))
        if pos + 1 < len(ints):
            shared = max(shared, lcp_bits(value, ints[pos + 1]))
        depths.append(shared + 1)
    return depths
