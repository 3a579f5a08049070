"""Prefix tree over sequential DocIDs and the validity mask ``g``."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from planahead.errors import DuplicateDocIdError, ValidationError


class _Invalid:
    """Score of an invalid prefix.

    Absorbs any addition and orders below every real number, so no finite
    arithmetic can turn an invalid prefix back into a valid one.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self

    def __float__(self):
        return float("-inf")

    def __repr__(self):
        return "INVALID"


INVALID = _Invalid()


class Node:
    __slots__ = ("codes", "children", "doc")

    def __init__(self):
        self.codes = np.empty(0, dtype=np.int64)
        self.children: list[Node] = []
        self.doc: int | None = None

    def child(self, code: int) -> "Node | None":
        pos = int(np.searchsorted(self.codes, code))
        if pos < self.codes.shape[0] and self.codes[pos] == code:
            return self.children[pos]
        return None


class PrefixTree:
    """Static trie; children are kept in ascending code order."""

    def __init__(self, root: Node, depth: int | None, size: int):
        self.root = root
        self.depth = depth
        self.size = size

    def __len__(self) -> int:
        return self.size

    def node(self, prefix: Sequence[int]) -> Node | None:
        cur = self.root
        for code in prefix:
            cur = cur.child(int(code))
            if cur is None:
                return None
        return cur

    def contains(self, docid: Sequence[int]) -> bool:
        return self.depth is not None and len(docid) == self.depth and self.node(docid) is not None

    def doc_of(self, docid: Sequence[int]) -> int | None:
        if self.depth is None or len(docid) != self.depth:
            return None
        leaf = self.node(docid)
        return None if leaf is None else leaf.doc

    def leaves(self) -> Iterable[tuple[tuple[int, ...], int]]:
        stack = [((), self.root)]
        while stack:
            prefix, node = stack.pop()
            if node.doc is not None:
                yield prefix, node.doc
            for code, child in zip(reversed(node.codes.tolist()), reversed(node.children)):
                stack.append((prefix + (code,), child))


def build_tree(docids) -> PrefixTree:
    """Build the trie; leaf ``i``'s ``doc`` is the ordinal of ``docids[i]``.

    Raises:
        ValidationError: on DocIDs of different lengths.
        DuplicateDocIdError: if a DocID appears twice.
    """
    rows = [tuple(int(c) for c in d) for d in docids]
    if not rows:
        return PrefixTree(Node(), None, 0)
    depth = len(rows[0])
    if depth < 1 or any(len(r) != depth for r in rows):
        raise ValidationError("all DocIDs must have the same positive length")

    nested: dict = {}
    for ordinal, row in enumerate(rows):
        cur = nested
        for code in row[:-1]:
            cur = cur.setdefault(code, {})
        if row[-1] in cur:
            raise DuplicateDocIdError(f"DocID {list(row)} inserted twice (docs {cur[row[-1]]} and {ordinal})")
        cur[row[-1]] = ordinal

    def freeze(d, level: int) -> Node:
        node = Node()
        keys = sorted(d)
        node.codes = np.asarray(keys, dtype=np.int64)
        if level == depth - 1:
            for k in keys:
                leaf = Node()
                leaf.doc = d[k]
                node.children.append(leaf)
        else:
            node.children = [freeze(d[k], level + 1) for k in keys]
        return node

    return PrefixTree(freeze(nested, 0), depth, len(rows))


def valid_extensions(tree: PrefixTree, prefix: Sequence[int]) -> set[int]:
    """Codes ``x`` such that ``prefix + [x]`` starts some stored DocID."""
    if tree.depth is not None and len(prefix) >= tree.depth:
        raise ValidationError(f"prefix length {len(prefix)} must be < L={tree.depth}")
    node = tree.node(prefix)
    return set() if node is None else set(node.codes.tolist())


def mask_g(tree: PrefixTree, prefix: Sequence[int]):
    """0.0 for a valid prefix, :data:`INVALID` otherwise."""
    if len(prefix) < 1 or (tree.depth is not None and len(prefix) > tree.depth):
        raise ValidationError(f"prefix length must lie in [1, L], got {len(prefix)}")
    if tree.depth is None:
        return INVALID
    return 0.0 if tree.node(prefix) is not None else INVALID
