import asyncio
import hashlib
import itertools
from typing import Callable, Iterator, List, Mapping, Sequence, Tuple, TypeVar

import numpy as np
from numpy.typing import ArrayLike, NDArray


def japanese_bracket(x: ArrayLike) -> NDArray[np.float64]:
    """<x> = (1 + x^2)^(1/2), elementwise on radii"""
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(1.0 + x * x)


def multi_indices(N: int, order: int) -> Iterator[Tuple[int, ...]]:
    """All alpha in N^N with |alpha| == order, lexicographically descending"""
    if order < 0:
        return
    for combo in itertools.product(range(order, -1, -1), repeat=N):
        if sum(combo) == order:
            yield combo


def multi_indices_upto(N: int, order: int) -> List[Tuple[int, ...]]:
    out: List[Tuple[int, ...]] = []
    for k in range(order + 1):
        out.extend(multi_indices(N, k))
    return out


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def config_digest(entries: Mapping[str, str]) -> str:
    """sha256 over the canonical `key = value` rendering (sorted keys)"""
    canonical = "\n".join(f"{k} = {entries[k]}" for k in sorted(entries))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def format_kv(entries: Mapping[str, object]) -> str:
    """Render a mapping as `key = value` lines, in insertion order"""
    lines = []
    for key, value in entries.items():
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


T = TypeVar("T")
R = TypeVar("R")


def gather_in_threads(func: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """Map func over items on worker threads, at most `jobs` at a time; results keep input order"""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    async def runner() -> List[R]:
        semaphore = asyncio.Semaphore(jobs)

        async def one(item: T) -> R:
            async with semaphore:
                return await asyncio.to_thread(func, item)

        return list(await asyncio.gather(*(one(item) for item in items)))

    return asyncio.run(runner())
