#!/usr/bin/env python3
"""Independent reimplementation of the mock provider arithmetic.

Reads profile fixtures, prints the expected rubric, alignment, activity,
coherence and EIS values as JSON. With --check FILE it compares against a
previously written expectation file instead.
"""

import argparse
import json
import math
import re
import sys

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = (1 << 64) - 1

STOP_WORDS = set("""
a about above after again against all am an and any are as at be because been before being below between both but
by can could did do does doing down during each few for from further had has have having he her here hers herself
him himself his how i if in into is it its itself just me more most my myself no nor not now of off on once only or
other our ours ourselves out over own same she should so some such than that the their theirs them themselves then
there these they this those through to too under until up very was we were what when where which while who whom why
will with would you your yours yourself yourselves s t
""".split())

TIER_SCORES = {"T1": 1.0, "T2": 0.8, "T3": 0.6, "T4": 0.4, "T5": 0.2}


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def hash_fraction(seed: int, tag: str, text: str) -> float:
    message = f"{seed}\x1f{tag}\x1f{text}".encode()
    return (fnv1a64(message) >> 11) / float(1 << 53)


def tokens(text: str):
    return [t.lower() for t in re.findall(r"[A-Za-z0-9]+", text)]


def rubric(seed, essay):
    return {dim: 1.0 + 4.0 * hash_fraction(seed, f"rubric/{dim}", essay) for dim in ("content", "language", "structure")}


def alignment(prompt, essay):
    wanted = {t for t in tokens(prompt) if t not in STOP_WORDS}
    if not wanted:
        return 0.0
    present = set(tokens(essay))
    return len(wanted & present) / len(wanted)


def coherence(descriptions):
    if len(descriptions) == 1:
        return 1.0
    sets = [set(tokens(d)) for d in descriptions]
    values = []
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            a, b = sets[i], sets[j]
            values.append(1.0 if not a and not b else len(a & b) / len(a | b))
    return sum(values) / len(values)


def embedding_norm_check(seed, essay):
    v = [0.0] * 384
    for t in tokens(essay):
        h = fnv1a64(f"{seed}\x1f" "embed" f"\x1f{t}".encode())
        v[h % 384] += -1.0 if h >> 63 else 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v] if n else [1.0] + [0.0] * 383


def expectations(profile, seed=0, gamma=0.5):
    essay = profile["essay"]
    activities = profile["activities"]
    per = []
    for a in activities:
        g = hash_fraction(seed, "activity", a["description"])
        t = TIER_SCORES[a["tier"]]
        per.append({"gpt_score": g, "tier_score": t, "fused": gamma * g + (1 - gamma) * t})
    c = coherence([a["description"] for a in activities])
    mean = sum(p["fused"] for p in per) / len(per)
    emb = embedding_norm_check(seed, essay["essay_text"])
    return {
        "id": profile["id"],
        "rubric": rubric(seed, essay["essay_text"]),
        "alignment": alignment(essay["prompt_text"], essay["essay_text"]),
        "activities": per,
        "coherence": c,
        "eis": mean * (0.85 + 0.15 * c),
        "embedding_head": emb[:8],
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("profiles", nargs="+")
    ap.add_argument("--check", help="compare against this expectation file")
    args = ap.parse_args()
    result = {}
    for path in args.profiles:
        with open(path) as f:
            p = json.load(f)
        result[p["id"]] = expectations(p)
    if not args.check:
        json.dump(result, sys.stdout, indent=1, sort_keys=True)
        print()
        return 0
    with open(args.check) as f:
        frozen = json.load(f)

    def close(a, b):
        if isinstance(a, dict):
            return a.keys() == b.keys() and all(close(a[k], b[k]) for k in a)
        if isinstance(a, list):
            return len(a) == len(b) and all(close(x, y) for x, y in zip(a, b))
        if isinstance(a, float):
            return abs(a - b) <= 1e-12
        return a == b

    ok = close(result, frozen)
    print("mock oracle expectations", "match" if ok else "DIFFER")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
