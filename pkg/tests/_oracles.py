"""Independent reference implementations used by the tests.

These are deliberately naive: loops, explicit enumeration, no sharing of
code with the package beyond data types.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from delexpara import tensorcore as tc


# ---------------------------------------------------------------- gradients

def numeric_grad(f, arrays, h=1e-4):
    """Central differences of scalar f(*arrays) w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            fp = f(*arrays)
            a[i] = old - h
            fm = f(*arrays)
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def gradcheck(build, arrays, rtol=1e-4, atol=1e-6, seed=0):
    """Compare autodiff and finite differences for loss = sum(build(*tensors) * R).

    A fixed random projection R makes the scalar sensitive to every output.
    Returns the worst relative error.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    probe = {}

    def scalar(*arrs):
        with tc.no_grad():
            out = build(*[tc.Tensor(a) for a in arrs]).data
        if "r" not in probe:
            probe["r"] = np.random.default_rng(seed).normal(size=out.shape)
        return float((out * probe["r"]).sum())

    scalar(*arrays)
    tensors = [tc.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*tensors)
    loss = tc.tensor_sum(tc.mul(out, tc.Tensor(probe["r"])))
    tc.backward(loss)
    numeric = numeric_grad(scalar, [a.copy() for a in arrays])
    worst = 0.0
    for t, n in zip(tensors, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(n)
        err = np.abs(analytic - n)
        tol = atol + rtol * np.abs(n)
        worst = max(worst, float((err / np.maximum(np.abs(n), atol / rtol)).max()))
        assert np.all(err <= tol + 1e-12), f"max abs err {err.max():.3e}"
    return worst


# ---------------------------------------------------------------- metrics

def novelty(train, generated):
    gen = []
    for g in generated:
        if tuple(g) not in gen:
            gen.append(tuple(g))
    if not gen:
        return None
    tr = [tuple(t) for t in train]
    return sum(1 for g in gen if g not in tr) / len(gen)


def diversity(generated):
    seen = []
    for g in generated:
        if tuple(g) not in seen:
            seen.append(tuple(g))
    return len(seen)


def _tri(corpus):
    out = []
    uniq = []
    for u in corpus:
        if tuple(u) not in uniq:
            uniq.append(tuple(u))
    for u in uniq:
        for i in range(len(u) - 2):
            t = (u[i], u[i + 1], u[i + 2])
            if t not in out:
                out.append(t)
    return out


def trigram_diversity(generated):
    n = len(_tri(generated))
    return n if n else None


def trigram_novelty(train, generated):
    g = _tri(generated)
    if not g:
        return None
    t = _tri(train)
    return sum(1 for x in g if x not in t) / len(g)


def slot_copy_rate(pairs):
    num = den = 0
    for src, gen in pairs:
        if len(src) == 0:
            continue
        den += 1
        if sorted(set(src)) == sorted(set(gen)):
            num += 1
    return None if den == 0 else num / den


def bio_entities(tags):
    """Entities from BIO tags, with a stray I-x opening a new entity."""
    ents = []
    i = 0
    while i < len(tags):
        t = tags[i]
        if t == "O":
            i += 1
            continue
        label = t[2:]
        j = i + 1
        while j < len(tags) and tags[j] == "I-" + label:
            j += 1
        ents.append((i, j, label))
        i = j
    return ents


def slot_errors(ref_tags, hyp_tags):
    ref = bio_entities(ref_tags)
    hyp = bio_entities(hyp_tags)
    s = d = i = 0
    for (a, b, lab) in ref:
        found = [h for h in hyp if h[0] == a and h[1] == b]
        if not found:
            d += 1
        elif found[0][2] != lab:
            s += 1
    for (a, b, _) in hyp:
        if not any(r[0] == a and r[1] == b for r in ref):
            i += 1
    return s, i, d, len(ref)


def ser(examples):
    """examples: list of (ref_tags, hyp_tags, ref_intent, hyp_intent)."""
    tot = ref = 0
    for r, h, _, _ in examples:
        s, i, d, n = slot_errors(r, h)
        tot += s + i + d
        ref += n
    return None if ref == 0 else tot / ref


def semer(examples):
    num = den = 0
    for r, h, ri, hi in examples:
        s, i, d, n = slot_errors(r, h)
        num += s + i + d + (ri != hi)
        den += n + 1
    return num / den


def intent_error(pred, gold):
    if not gold:
        return None
    return sum(1 for p, g in zip(pred, gold) if p != g) / len(gold)


def spearman(x, y):
    def ranks(v):
        out = []
        for a in v:
            less = sum(1 for b in v if b < a)
            eq = sum(1 for b in v if b == a)
            out.append(less + (eq + 1) / 2)
        return out

    rx, ry = ranks(x), ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return None if den == 0 else num / den


# ---------------------------------------------------------------- FST

def enumerate_language(rules, catalog_entries):
    """All lexicalizations of every rule, as a set of word tuples."""
    out = set()
    for rule in rules:
        choices = []
        for tok in rule:
            if tok.startswith("{") and tok.endswith("}"):
                choices.append([tuple(v.lower().split()) if isinstance(v, str) else tuple(v) for v in catalog_entries[tok[1:-1]]])
            else:
                choices.append([(tok,)])
        for combo in itertools.product(*choices):
            out.add(tuple(w for part in combo for w in part))
    return out


# ---------------------------------------------------------------- beam search

def brute_force_best(step_fn, n_classes, eos, max_len, normalize):
    """Exhaustive search over every sequence ending in EOS (or forced at max_len)."""
    best = []
    for length in range(0, max_len + 1):
        for seq in itertools.product(range(n_classes), repeat=length):
            if eos in seq:
                continue
            lp = 0.0
            ok = True
            for t in range(length):
                row = step_fn([seq[:t]])[0]
                lp += row[seq[t]]
                if not np.isfinite(lp):
                    ok = False
                    break
            if not ok:
                continue
            if length < max_len:
                row = step_fn([seq])[0]
                total = lp + row[eos]
                if np.isfinite(total):
                    best.append((total / (length + 1) if normalize else total, seq))
    best.sort(key=lambda x: (-x[0], x[1]))
    return best


# ---------------------------------------------------------------- composed model

def tiny_s3_model(seed):
    """1-layer S3 model in float64 with dims <= 8, plus two S3P training pairs."""
    from delexpara.corpus import SlotCatalog, build_vocab, reformat
    from delexpara.embedder import EmbeddingConfig
    from delexpara.model import ModelConfig, PointerTransformer

    rng = np.random.default_rng([seed, 31])
    words = ["a", "b", "c", "d"]
    cat = SlotCatalog({"X": ["p q", "r"], "Y": ["s", "t u v", "p"]})
    raw = [(("a", "{X}", "b", "{Y}"), ("{Y}", "c", "{X}")),
           (("{Y}", "d"), ("d", "a", "{Y}"))]
    pairs = [reformat(p, "S3P", cat, seed) for p in raw]
    vocab = build_vocab(pairs, extra_words=words + ["p", "q", "r", "s", "t", "u", "v"])
    cfg = ModelConfig(heads=2, layers=1, hidden=8, ffn=8, dropout=0.0, max_len=6,
                      embedding=EmbeddingConfig("S3", embed_dim=8, conv_channels=8))
    model = PointerTransformer(cfg, vocab, seed=int(rng.integers(1 << 30)))
    for t in model.params.values():
        t.data = t.data.astype(np.float64)
    return model, pairs


def model_gradcheck(seed, h=1e-5, rtol=1e-4, atol=1e-6):
    """Finite-difference check of every parameter of the composed model.

    Returns (worst relative error, number of coordinates checked).
    """
    from delexpara.model import training_loss

    model, pairs = tiny_s3_model(seed)
    for t in model.params.values():
        t.grad = None
    tc.backward(training_loss(pairs, model))
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in model.params.items()}

    def f():
        with tc.no_grad():
            return float(training_loss(pairs, model).data)

    worst, checked = 0.0, 0
    for name, t in sorted(model.params.items()):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            num = (fp - fm) / (2 * h)
            ana = analytic[name].reshape(-1)[i]
            err = abs(ana - num)
            if err > atol + rtol * abs(num):
                raise AssertionError(f"{name}[{i}]: analytic {ana:.8e} vs numeric {num:.8e}")
            worst = max(worst, err / max(abs(num), atol / rtol))
            checked += 1
    return worst, checked


# ---------------------------------------------------------------- random fixtures

def random_corpus(rng, max_utts=20, max_len=6):
    words = ["a", "b", "c", "d", "{X}", "{Y}"]
    return [tuple(words[int(i)] for i in rng.integers(0, len(words), size=int(rng.integers(0, max_len + 1))))
            for _ in range(int(rng.integers(0, max_utts + 1)))]


def random_bio(rng, n, labels=("X", "Y")):
    tags = []
    for _ in range(n):
        r = rng.random()
        lab = labels[int(rng.integers(len(labels)))]
        tags.append("O" if r < 0.4 else ("B-" if r < 0.7 else "I-") + lab)
    return tags


def random_rule_set(rng, max_rules=5, max_values=3, max_value_words=4):
    """(rules, catalog entries) with <= 5 rules and <= 3 values per slot."""
    words = ["go", "to", "the", "now", "x"]
    entries = {}
    for name in ("S", "T"):
        vals = set()
        for _ in range(int(rng.integers(1, max_values + 1))):
            vals.add(" ".join(words[int(i)] for i in rng.integers(0, len(words), size=int(rng.integers(1, max_value_words + 1)))))
        entries[name] = sorted(vals)
    rules = []
    for _ in range(int(rng.integers(1, max_rules + 1))):
        toks = [(words + ["{S}", "{T}"])[int(i)] for i in rng.integers(0, len(words) + 2, size=int(rng.integers(1, 5)))]
        rules.append(tuple(toks))
    return rules, entries


# ---------------------------------------------------------------- op cases

def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, margin * np.sign(x + 1e-12) * 2, x)


def op_case(name, rng):
    """(build, input arrays) for one differentiable op, dims <= 8."""
    s = tuple(rng.integers(1, 6, size=2))
    if name == "add":
        return tc.add, [rng.normal(size=s), rng.normal(size=(s[1],))]
    if name == "sub":
        return tc.sub, [rng.normal(size=(1, s[1])), rng.normal(size=s)]
    if name == "mul":
        return tc.mul, [rng.normal(size=s), rng.normal(size=s)]
    if name == "scale":
        return (lambda a: tc.scale(a, -1.7)), [rng.normal(size=s)]
    if name == "relu":
        return tc.relu, [_away_from_zero(rng, s)]
    if name == "sum":
        return tc.tensor_sum, [rng.normal(size=s)]
    if name == "dropout":
        return (lambda a: tc.dropout(a, 0.3, np.random.default_rng(5), True)), [rng.normal(size=s)]
    if name == "masked_fill":
        mask = rng.random(s) < 0.4
        return (lambda a: tc.masked_fill(a, mask, 0.0)), [rng.normal(size=s)]
    if name == "reshape":
        return (lambda a: tc.reshape(a, (-1,))), [rng.normal(size=s)]
    if name == "transpose":
        return (lambda a: tc.transpose(a, (2, 0, 1))), [rng.normal(size=s + (3,))]
    if name == "concat":
        return (lambda a, b: tc.concat([a, b], axis=1)), [rng.normal(size=s), rng.normal(size=(s[0], 2))]
    if name == "matmul":
        return tc.matmul, [rng.normal(size=(2,) + s), rng.normal(size=(s[1], 4))]
    if name == "embedding_lookup":
        ids = rng.integers(0, 5, size=(2, 3))
        return (lambda t: tc.embedding_lookup(t, ids)), [rng.normal(size=(5, 4))]
    if name == "layer_norm":
        d = int(rng.integers(2, 8))
        return tc.layer_norm, [rng.normal(size=(3, d)), rng.normal(size=(d,)), rng.normal(size=(d,))]
    if name == "softmax":
        return tc.softmax, [rng.normal(size=s) * 3]
    if name == "masked_softmax":
        keep = rng.random(s) < 0.7
        keep[:, 0] = True
        return (lambda a: tc.masked_softmax(a, keep)), [rng.normal(size=s)]
    if name == "cross_entropy":
        tgt = rng.integers(0, s[1], size=(2, s[0]))
        w = (rng.random((2, s[0])) < 0.8).astype(float)
        w[0, 0] = 1.0
        return (lambda z: tc.cross_entropy(z, tgt, w)), [rng.normal(size=(2, s[0], s[1]))]
    if name == "mean_pool":
        return (lambda a: tc.mean_pool(a, 1)), [rng.normal(size=s + (2,))]
    if name == "max_pool":
        return (lambda a: tc.max_pool(a, 0)), [rng.normal(size=s)]
    if name == "conv1d":
        length, cin, cout = (int(v) for v in rng.integers(1, 6, size=3))
        return tc.conv1d, [rng.normal(size=(2, length, cin)), rng.normal(size=(3, cin, cout)),
                           rng.normal(size=(cout,))]
    raise KeyError(name)


OPS = ["add", "sub", "mul", "scale", "relu", "sum", "dropout", "masked_fill", "reshape", "transpose",
       "concat", "matmul", "embedding_lookup", "layer_norm", "softmax", "masked_softmax",
       "cross_entropy", "mean_pool", "max_pool", "conv1d"]
