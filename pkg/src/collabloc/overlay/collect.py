"""CTPM provider collection with a doubling pick size.

The number of providers picked so far doubles every iteration
(``j_new = 2 * j_old``): the first iteration asks ``j0`` providers, the
second ``j0`` more, then ``2 * j0``, ``4 * j0`` and so on, until ``l``
non-NA answers arrive or the repository runs out. With no knowledgeable
provider this takes ``ceil(log2(m / j0)) + 1`` iterations.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from collabloc.errors import InvalidArgument, NoInformation


class CollectionExhausted(NoInformation):
    def __init__(self, iterations: int, contacted: int):
        super().__init__(f"repository exhausted after {iterations} iterations ({contacted} providers), no answers")
        self.iterations = iterations
        self.contacted = contacted


def default_initial_pick(l: int) -> int:
    return max(1, math.ceil(l / 2))


def batches(repository: Sequence[str], j0: int, rng: np.random.Generator) -> Iterator[list[str]]:
    """Successive pick batches, uniform without replacement."""
    if j0 < 1:
        raise InvalidArgument("j0 must be at least 1")
    order = rng.permutation(len(repository))
    picked = 0
    target = j0
    while picked < len(repository):
        end = min(target, len(repository))
        yield [repository[i] for i in order[picked:end]]
        picked = end
        target *= 2


def ctpm_collect(repository: Sequence[str], ask: Callable[[str], Optional[object]], l: int,
                 rng: np.random.Generator, j0: Optional[int] = None):
    """Query providers until ``l`` non-NA answers are in.

    ``ask`` returns ``None`` for NA. Returns ``(answers, r)`` where ``answers``
    holds every non-NA answer received (possibly more than ``l``) and ``r``
    is the number of iterations.
    """
    if l < 1:
        raise InvalidArgument("l must be at least 1")
    j0 = default_initial_pick(l) if j0 is None else j0
    answers = []
    r = 0
    contacted = 0
    for batch in batches(repository, j0, rng):
        r += 1
        for pid in batch:
            contacted += 1
            ans = ask(pid)
            if ans is not None:
                answers.append(ans)
        if len(answers) >= l:
            break
    if not answers:
        raise CollectionExhausted(r, contacted)
    return answers, r


def all_na_iterations(m: int, j0: int) -> int:
    """Iterations needed to exhaust a repository of ``m`` providers."""
    if m <= 0:
        return 0
    r = 1
    while j0 * 2 ** (r - 1) < m:
        r += 1
    return r


def expected_iterations(m: int, l: int, knowledge: float, rng: np.random.Generator,
                        trials: int = 200, j0: Optional[int] = None) -> float:
    """Monte-Carlo mean of ``r`` when each provider knows the place w.p. ``knowledge``."""
    total = 0
    for _ in range(trials):
        knows = rng.random(m) < knowledge
        repo = list(range(m))
        try:
            _, r = ctpm_collect(repo, lambda i: True if knows[i] else None, l, rng, j0)
        except CollectionExhausted as exc:
            r = exc.iterations
        total += r
    return total / trials
