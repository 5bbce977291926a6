"""Straightforward dict-based LRU cache used as an independent oracle for the kernel."""
from collections import OrderedDict


def reference_counts(addrs, a, z, w):
    """Return (cold_loads, replacement_loads, cold_misses, replacement_misses, hits)."""
    sets = [OrderedDict() for _ in range(z)]
    requested, seen_lines = set(), set()
    cl = rl = cm = rm = hits = 0
    for addr in addrs:
        line = addr // w
        s = sets[line % z]
        if line in s:
            s.move_to_end(line)
            hit = True
            hits += 1
        else:
            hit = False
            if line in seen_lines:
                rm += 1
            else:
                cm += 1
                seen_lines.add(line)
            if len(s) == a:
                s.popitem(last=False)
            s[line] = True
        if addr not in requested:
            requested.add(addr)
            cl += 1
        elif not hit:
            rl += 1
    return cl, rl, cm, rm, hits
