"""Shared builders for synthetic stores, random programs, and fact sets."""

from __future__ import annotations

import numpy as np
import pytest

from kgrex import FeatureMapStore, Manifest, lp


def make_manifest(n, labels=None, class_names=None, preds=None, split="train"):
    labels = labels if labels is not None else ["a"] * n
    class_names = class_names if class_names is not None else sorted(set(labels) | {"a"})
    return Manifest(
        image_ids=[f"img{i:04d}" for i in range(n)],
        true_labels=list(labels),
        class_names=list(class_names),
        cnn_predictions=list(preds) if preds is not None else None,
        split_tag=split,
    )


def make_store(data, labels=None, class_names=None, preds=None, split="train"):
    data = np.asarray(data, dtype=np.float32)
    manifest = make_manifest(data.shape[0], labels, class_names, preds, split)
    return FeatureMapStore.from_data(data, manifest)


def random_store(rng, n=6, k=4, h=3, w=3):
    return make_store(rng.random((n, k, h, w)).astype(np.float32))


def pattern_bank(rng, n_patterns, h, w):
    """Disjoint-support spatial patterns so cross-pattern cosine is near zero."""
    cells = [(r, c) for r in range(h) for c in range(w)]
    per = len(cells) // n_patterns
    assert per >= 1, "pattern bank needs h*w >= n_patterns"
    patterns = []
    for p in range(n_patterns):
        m = np.zeros((h, w))
        for r, c in cells[p * per : (p + 1) * per]:
            m[r, c] = 0.5 + rng.random()
        patterns.append(m)
    return patterns


def build_pattern_store(
    rng,
    n_images,
    n_patterns,
    dups,
    noise_rel=1e-2,
    h=8,
    w=8,
    z=None,
    labels=None,
    class_names=None,
    preds=None,
    split="train",
):
    """Store whose kernels are noisy duplicates of latent patterns.

    Kernel j belongs to pattern j // dups. Image i activates pattern p iff
    z[i, p] == 1; active maps are the pattern scaled by a random factor in
    [0.8, 1.2], inactive maps are pure noise. Noise magnitude is ``noise_rel``
    relative to the pattern's RMS value.
    """
    patterns = pattern_bank(rng, n_patterns, h, w)
    if z is None:
        z = rng.integers(0, 2, size=(n_images, n_patterns))
    n_kernels = n_patterns * dups
    data = np.zeros((n_images, n_kernels, h, w), dtype=np.float32)
    for p, pat in enumerate(patterns):
        sigma = noise_rel * float(np.sqrt((pat**2).mean()))
        for d in range(dups):
            k = p * dups + d
            scale = 0.8 + 0.4 * rng.random(n_images)
            noise = rng.normal(0.0, sigma, size=(n_images, h, w))
            data[:, k, :, :] = z[:, p, None, None] * scale[:, None, None] * pat + noise
    store = make_store(data, labels=labels, class_names=class_names, preds=preds, split=split)
    return store, z


def random_program(rng, n_features=6, max_targets=4, max_abs=3, undefined_ref_rate=0.0):
    """Random stratified program over predicates f0..f{n-1} and ab1..abM.

    Abnormality bodies only reference higher-numbered abnormalities, which
    keeps the dependency graph acyclic by construction.
    """
    feats = [f"f{i}" for i in range(n_features)]
    n_abs = int(rng.integers(0, max_abs + 1))
    ab_ids = list(range(1, n_abs + 1))
    ghost = n_abs + 1  # referenced but never defined, when enabled

    def random_body(allowed_abs):
        body = []
        for f in rng.permutation(feats)[: rng.integers(1, 4)]:
            body.append(lp.Literal(str(f), bool(rng.integers(0, 2))))
        for ab in allowed_abs:
            if rng.random() < 0.4:
                body.append(lp.Literal(f"ab{ab}", True))
        if undefined_ref_rate and rng.random() < undefined_ref_rate:
            body.append(lp.Literal(f"ab{ghost}", True))
        return tuple(body)

    rules = []
    classes = [f"c{j}" for j in range(int(rng.integers(1, max_targets + 1)))]
    for cls in classes:
        rules.append(lp.Rule(head_class=cls, body=random_body(ab_ids)))
    for ab in ab_ids:
        rules.append(lp.Rule(head_ab=ab, body=random_body([a for a in ab_ids if a > ab])))
    program = lp.Program(rules)
    program.validate()
    return program


def random_facts(rng, program):
    preds = program.feature_predicates()
    return {p: int(rng.integers(0, 2)) for p in preds}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
