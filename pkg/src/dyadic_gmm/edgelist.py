"""Edge-list text format: a ``# n=<N>`` header, then one ``i j`` line per link (0-based)."""

from __future__ import annotations

import re
from pathlib import Path

from .model import Network

_HEADER = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


def format_edge_list(g: Network) -> str:
    lines = [f"# n={g.n}"]
    lines += [f"{i} {j}" for i, j in g.edges()]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Network:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m and n is None:
                n = int(m.group(1))
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {raw!r}")
        i, j = int(parts[0]), int(parts[1])
        edges.append((i, j))
    if n is None:
        raise ValueError("missing '# n=<N>' header")
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
    return Network.from_edges(n, edges)


def write_edge_list(g: Network, path) -> None:
    Path(path).write_text(format_edge_list(g))


def read_edge_list(path) -> Network:
    return parse_edge_list(Path(path).read_text())
