"""Independent brute-force oracles used to cross-check the package.

Everything here works on plain Python sets and nested loops, deliberately
avoiding the bitmask fast paths of the implementation under test.
"""

import math


def ref_invert(sets):
    n = len(sets)
    return [{x for x in range(n) if z in sets[x]} for z in range(n)]


def ref_compose(sets):
    inv = ref_invert(sets)
    return [set().union(*(inv[z] for z in sets[x])) if sets[x] else set() for x in range(len(sets))]


def ref_ball(metric, radius, n):
    return [{z for z in range(n) if metric(x, z) <= radius} for x in range(n)]


def ref_robust_region(labels, sets):
    return {x for x in range(len(labels)) if all(labels[z] == labels[x] for z in sets[x])}


def ref_selective(labels, sets, z, abstain):
    inv = ref_invert(sets)
    pre = inv[z]
    if not pre:
        return abstain
    vals = {labels[x] for x in pre}
    if len(vals) == 1:
        return vals.pop()
    return abstain


def ref_robust_risk(predict, mass, concept_labels, sets):
    total = 0.0
    for x in range(len(mass)):
        if mass[x] > 0 and any(predict(z) != concept_labels[x] for z in sets[x]):
            total += mass[x]
    return total


def ref_natural_error(predict, mass, concept_labels):
    return math.fsum(mass[x] for x in range(len(mass)) if mass[x] > 0 and predict(x) != concept_labels[x])


def ref_shattered(concepts, sets, witnesses, anchors, pos, neg):
    """Check one candidate witness tuple directly against the definition.

    witnesses: list of z points; anchors: list of (x_plus, x_minus) pairs.
    """
    k = len(witnesses)
    for z, (xp, xm) in zip(witnesses, anchors):
        if z not in sets[xp] or z not in sets[xm]:
            return False
    for code in range(2**k):
        pattern = [pos if (code >> i) & 1 else neg for i in range(k)]
        found = False
        for h in concepts:
            ok = True
            for i, (xp, xm) in enumerate(anchors):
                anchor = xp if pattern[i] == pos else xm
                if any(h(zz) != pattern[i] for zz in sets[anchor]):
                    ok = False
                    break
            if ok:
                found = True
                break
        if not found:
            return False
    return True
