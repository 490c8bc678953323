"""Shared fixtures: reference networks, the worked witness, random trees."""

from __future__ import annotations

import random

import pytest

from fusetree import ContractionTree, ScheduleSolution, build_tree, parse_network
from fusetree.bench import running_example_network
from fusetree.network import Contraction, TensorRef

GOLDEN_IR = """
forall(r, forall(j,
where(forall(k, forall(i, R(j, k, i) = Y(k, i) * D(r, j, k))),
       where(forall(q, forall(k, forall(i, Y(k, i) = X(q, i) * C(r, q, k)))),
        forall(p, forall(q, forall(i, X(q, i) = A(p, q, i) * B(r, j, p))))))))
"""

CHAIN_NETWORK = """
extent i 4
extent j 5
extent k 3
X[i,j] = A[i,k] * B[k,j]
R[i] = X[i,j] * V[j]
"""

MATMUL_NETWORK = """
extent i 2
extent j 2
extent k 2
R[i,j] = T[i,k] * S[k,j]
"""


@pytest.fixture
def running_tree() -> ContractionTree:
    """The four-tensor example with the root layout pinned to R(j,k,i)."""
    return parse_network(running_example_network(4))


@pytest.fixture
def running_tree_free() -> ContractionTree:
    """Same network with the root layout left to the solver."""
    text = running_example_network(4).replace("layout R j,k,i\n", "")
    return parse_network(text)


@pytest.fixture
def chain_tree() -> ContractionTree:
    return parse_network(CHAIN_NETWORK)


@pytest.fixture
def matmul_tree() -> ContractionTree:
    return parse_network(MATMUL_NETWORK)


def reference_witness() -> ScheduleSolution:
    """The fully worked schedule for the running example.

    Loop orders (r,j,p,q,i), (r,j,q,k,i), (r,j,k,i); layouts A(p,q,i),
    B(r,j,p), C(r,q,k), D(r,j,k), R(j,k,i).
    """
    return ScheduleSolution(
        bound=2,
        ap={0: 0, 1: 1, 2: 2},
        lp={
            0: {"i": 4, "j": 1, "p": 2, "q": 3, "r": 0},
            1: {"r": 0, "j": 1, "q": 2, "k": 3, "i": 4},
            2: {"r": 0, "j": 1, "k": 2, "i": 3},
        },
        dp={
            "A": {0: 2, 1: 0, 2: 1},
            "B": {0: 1, 1: 2, 2: 0},
            "C": {0: 2, 1: 1, 2: 0},
            "D": {0: 1, 1: 2, 2: 0},
            "R": {0: 2, 1: 0, 2: 1},
        },
    )


def random_tree(rng: random.Random, max_contractions: int = 3) -> ContractionTree:
    """Random small tree within the brute-force limits (m <= 3, |I| <= 5)."""
    while True:
        tree = _random_tree_once(rng, max_contractions)
        if all(len(c.index_set) <= 5 for c in tree.contractions):
            return tree


def _random_tree_once(rng: random.Random, max_contractions: int) -> ContractionTree:
    letters = list("abcdefgh")
    extents = {name: rng.randint(2, 4) for name in letters}
    pool = list(letters)
    counter = 0

    def fresh_ref(prefix: str, max_order: int) -> TensorRef:
        nonlocal counter
        counter += 1
        k = rng.randint(1, min(max_order, len(pool)))
        return TensorRef(f"{prefix}{counter}", tuple(rng.sample(pool, k)))

    def make_contraction(
        cid: int,
        lhs: TensorRef,
        rhs: TensorRef,
        is_root: bool,
        keep_external: set[str] = frozenset(),
    ) -> Contraction:
        union = sorted(set(lhs.indices) | set(rhs.indices))
        forced = sorted(set(union) & keep_external)
        free = [i for i in union if i not in forced]
        low = 0 if is_root else max(0, 1 - len(forced))
        size = rng.randint(min(low, len(free)), len(free))
        result_idx = tuple(sorted(rng.sample(free, size) + forced))
        name = "R" if is_root else f"W{cid}"
        summed = set(union) - set(result_idx)
        for idx in summed:  # keep summed indices out of later references
            if idx in pool:
                pool.remove(idx)
        return Contraction(cid, TensorRef(name, result_idx), lhs, rhs)

    m = rng.randint(1, max_contractions)
    contractions: list[Contraction] = []
    if m == 1:
        contractions.append(make_contraction(0, fresh_ref("A", 3), fresh_ref("B", 2), True))
    elif m == 2:
        c0 = make_contraction(0, fresh_ref("A", 3), fresh_ref("B", 2), False)
        contractions.append(c0)
        contractions.append(make_contraction(1, c0.result, fresh_ref("C", 2), True))
    else:
        if rng.random() < 0.5:  # chain
            c0 = make_contraction(0, fresh_ref("A", 3), fresh_ref("B", 2), False)
            c1 = make_contraction(1, c0.result, fresh_ref("C", 2), False)
            contractions = [c0, c1, make_contraction(2, c1.result, fresh_ref("D", 2), True)]
        else:  # two children under the root
            c0 = make_contraction(0, fresh_ref("A", 2), fresh_ref("B", 2), False)
            lhs1, rhs1 = fresh_ref("C", 2), fresh_ref("D", 2)
            # indices shared with the sibling subtree must stay external
            sibling = set(c0.index_set)
            c1 = make_contraction(1, lhs1, rhs1, False, keep_external=sibling)
            contractions = [c0, c1, make_contraction(2, c0.result, c1.result, True)]
    used = {i for c in contractions for i in c.index_set}
    return build_tree(contractions, {k: v for k, v in extents.items() if k in used})
