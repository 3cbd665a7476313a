#!/usr/bin/env python3
"""Independent recomputation of the hand-derived expected values used in the
Rust test suites. Pure Python, no shared code with the crate. Run:

    python3 scripts/derive_oracles.py

and compare with the constants frozen in crates/core/tests/*.rs.
"""
import json
import math
from collections import Counter

# ---------------------------------------------------------------- text rules

def tokenize(text):
    out = []
    for raw in text.lower().split():
        tok = raw
        while tok and not tok[0].isalnum():
            tok = tok[1:]
        while tok and not tok[-1].isalnum():
            tok = tok[:-1]
        if tok:
            out.append(tok)
    return out


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def mock_embed(text, dim=64):
    v = [0.0] * dim
    toks = tokenize(text)
    if not toks:
        toks = [text.strip()]
    for t in toks:
        v[fnv1a64(t.encode()) % dim] += 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return dot / (na * nb)


def brute_force_top_k(entries, query, k, theta):
    scored = [(i, cosine(query, e)) for i, e in enumerate(entries)]
    kept = [s for s in scored if s[1] > theta]
    kept.sort(key=lambda s: (-s[1], s[0]))
    return kept[:k]

# ------------------------------------------------------------------ metrics

def entropy(seqs, n):
    c = Counter()
    for s in seqs:
        for i in range(len(s) - n + 1):
            c[tuple(s[i:i + n])] += 1
    total = sum(c.values())
    return -sum(v / total * math.log2(v / total) for v in c.values())


def lcs(a, b):
    dp = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            dp[i + 1][j + 1] = dp[i][j] + 1 if a[i] == b[j] else max(dp[i][j + 1], dp[i + 1][j])
    return dp[-1][-1]


def f1(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def rouge_l(c, r):
    l = lcs(c, r)
    if not c or l == 0:
        return 0.0
    return f1(l / len(c), l / len(r))


def persona_f1(resp, facts):
    union = Counter()
    for f in facts:
        union.update(f)
    rc = Counter(resp)
    matched = sum((rc & union).values())
    if matched == 0:
        return 0.0
    return f1(matched / sum(rc.values()), matched / sum(union.values()))


# ------------------------------------------------------------------ fixtures

SAMPLE_DIALOGUE = [
    ("Francisco", "Hey Rajiv! How's the guitar practice going?"),
    ("Rajiv", "It's going alright. I'm still learning the basics."),
    ("Francisco", "That's cool. Have you thought about incorporating your guitar playing into your artwork?"),
    ("Rajiv", "Actually, I have. I was thinking about using sound waves as a way to create mathematical patterns."),
    ("Francisco", "That sounds really interesting. We should definitely collaborate on a project involving artwork and music."),
    ("Rajiv", "Definitely. We could also explore incorporating poetry into the mix."),
    ("Francisco", "I like the way you think. Speaking of collaborations, have you signed up for those improv classes yet?"),
]
GENERAL = "Not yet, but I'm definitely considering it. Improv could really help with thinking on my feet during creative projects."
# Rajiv's memory pool for the end-to-end fixture. Under the mock embedder the
# response query keeps only the Hailey Johnson entry above 0.2, while the
# context query ranks the guitar/artwork entry first.
RAJIV_POOL = [
    "Rajiv combines guitar playing with artwork.",
    "Rajiv plans to take improv with Hailey Johnson.",
    "Rajiv enjoys cooking spicy food.",
]


def main():
    out = {}
    out["cosine_122_212"] = cosine([1, 2, 2], [2, 1, 2])
    out["entropy_abab_n2"] = entropy([["a", "b", "a", "b"]], 2)
    out["entropy_the_cat_sat_n1"] = entropy([["the", "cat", "sat"]], 1)
    out["entropy_two_identical"] = [entropy([["a", "b", "c", "a"]], 2), entropy([["a", "b", "c", "a"]] * 2, 2)]
    out["rouge_hand"] = rouge_l(["the", "cat", "sat"], ["the", "cat", "ate", "food"])
    out["persona_f1_hand"] = persona_f1(["likes", "hiking", "today"], [["likes", "hiking"], ["mountains", "guitar"]])
    out["c_score_2e1c1n"] = sum([1, 1, -1, 0]) / 4

    # eight fixed vectors, ties at positions 1/4 (identical) and 2/6 (scaled)
    pool8 = [
        [1.0, 0.0, 0.0, 0.0],
        [0.6, 0.8, 0.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.6, 0.8, 0.0, 0.0],
        [-1.0, 0.5, 0.0, 0.0],
        [0.0, 2.0, 2.0, 0.0],
        [1.0, 1.0, 1.0, 1.0],
    ]
    q8 = [1.0, 1.0, 0.2, 0.0]
    out["pool8_all_scores"] = [cosine(q8, e) for e in pool8]
    out["pool8_top5_theta0.2"] = brute_force_top_k(pool8, q8, 5, 0.2)

    # mock embedder fixtures
    out["tokens_general"] = tokenize(GENERAL)
    g = mock_embed(GENERAL)
    ctx_text = "\n".join(t for _, t in SAMPLE_DIALOGUE)
    c = mock_embed(ctx_text)
    out["sample_response_query_scores"] = [cosine(g, mock_embed(s)) for s in RAJIV_POOL]
    out["sample_context_query_scores"] = [cosine(c, mock_embed(s)) for s in RAJIV_POOL]

    # disjoint-token fixture: verify no bucket collisions
    for words in (["apple", "banana"], ["guitar", "poetry"]):
        out.setdefault("buckets", {}).update({w: fnv1a64(w.encode()) % 64 for w in words})

    # SimOAP selection: pool of two persona facts; cand 2 entails fact 0 under scripted NLI.
    sim_pool = ["Rajiv loves playing guitar.", "Rajiv paints with mathematical patterns."]
    # candidate 1 is more coherent, candidate 2 wins on consistency
    cands = [
        "I love playing guitar.",
        "I am always playing something.",
    ]
    sel = []
    for i, cand in enumerate(cands):
        ce = mock_embed(cand)
        top = brute_force_top_k([mock_embed(s) for s in sim_pool], ce, 5, 0.2)
        coh = sum(s for _, s in top) / len(top) if top else 0.0
        cs = (1.0 if i == 1 else 0.0) / len(sim_pool)
        sel.append({"coherence": coh, "c_score": cs, "total": coh + cs, "top": top})
    out["sim_oap_selection"] = sel

    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
