"""Static checks on parsed processes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from . import ast as A


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: Optional[Tuple[int, int]] = None

    def __str__(self):
        if self.span:
            return "%d:%d: %s" % (self.span[0], self.span[1], self.message)
        return self.message


def flag_names(chans):
    return {c + "_r" for c in chans} | {c + "_w" for c in chans}


def validate(p, discrete: bool = False) -> List[Diagnostic]:
    """Return diagnostics; an empty list means the process is well formed.

    ``discrete=True`` accepts the shapes produced by the discretizer: delayed
    references in assignments and guards, readiness flags, and no continuous
    statements are required.
    """
    out: List[Diagnostic] = []
    comps = A.components(p)
    chans = A.channels(p)

    for i, c in enumerate(comps):
        for n in A.walk(c):
            if isinstance(n, A.Parallel):
                out.append(Diagnostic("nested-parallel", "parallel composition only allowed at top level", n.span))
            elif isinstance(n, A.Repeat):
                if not isinstance(n.count, int) or n.count < 1:
                    out.append(Diagnostic("repnum", "repetition needs a positive bound", n.span))
            elif isinstance(n, A.Wait):
                if n.duration < 0:
                    out.append(Diagnostic("wait", "negative wait duration", n.span))

    # channel pairing
    readers, writers = {}, {}
    for i, c in enumerate(comps):
        for n in A.walk(c):
            if isinstance(n, A.Input):
                readers.setdefault(n.chan, set()).add(i)
            elif isinstance(n, A.Output):
                writers.setdefault(n.chan, set()).add(i)
    for ch in sorted(chans):
        r, w = readers.get(ch, set()), writers.get(ch, set())
        if len(w) > 1:
            out.append(Diagnostic("channel", "channel %s: multiple writers" % ch))
        if len(r) > 1:
            out.append(Diagnostic("channel", "channel %s: multiple readers" % ch))
        if not w:
            out.append(Diagnostic("channel", "channel %s: no writer" % ch))
        if not r:
            out.append(Diagnostic("channel", "channel %s: no reader" % ch))
        if r and w and r & w:
            out.append(Diagnostic("channel", "channel %s: read and written by the same component" % ch))

    # variables: each component owns the variables it writes
    owner = {}
    for i, c in enumerate(comps):
        for v in A.assigned_vars(c):
            if v in owner and owner[v] != i:
                out.append(Diagnostic("shared-var", "variable %s written by several components" % v))
            owner.setdefault(v, i)
    flags = flag_names(chans)
    for i, c in enumerate(comps):
        written = A.assigned_vars(c)
        for node, e in A.process_exprs(c):
            used = A.expr_vars(e) | {d.name for d in A.delayed_refs(e)}
            for v in sorted(used):
                if discrete and v in flags:
                    continue
                if v not in written:
                    if v in owner:
                        out.append(Diagnostic("shared-var", "variable %s of another component read here" % v,
                                              node.span))
                    else:
                        out.append(Diagnostic("undeclared", "variable %s is never assigned" % v, node.span))
        if not discrete:
            for v in sorted(written & flags):
                out.append(Diagnostic("flag-name", "variable %s collides with a readiness flag" % v))

    # delayed references
    delays = set()
    for c in comps:
        for n in A.walk(c):
            if isinstance(n, (A.Dde, A.DdeInterrupt)):
                for e in n.spec.rhs:
                    for d in A.delayed_refs(e):
                        delays.add(d.delay)
                        if d.name not in n.spec.vars:
                            out.append(Diagnostic("delay", "delayed reference %s@%g is not a state of this "
                                                           "continuous statement" % (d.name, d.delay), d.span))
                for d in (x for e in A.bool_exprs(n.domain) for x in A.delayed_refs(e)):
                    if not discrete:
                        out.append(Diagnostic("delay", "delayed reference %s in a domain" % d.name, d.span))
            elif not discrete:
                own = []
                if isinstance(n, A.Assign):
                    own = [n.expr]
                elif isinstance(n, A.ParAssign):
                    own = list(n.exprs)
                elif isinstance(n, A.Output):
                    own = [n.expr]
                elif isinstance(n, A.Guard):
                    own = A.bool_exprs(n.cond)
                for e in own:
                    for d in A.delayed_refs(e):
                        out.append(Diagnostic("delay", "delayed reference %s@%g outside a continuous statement"
                                              % (d.name, d.delay), d.span))
    if len(delays) > 1:
        out.append(Diagnostic("delay", "several delay constants used: %s" % sorted(delays)))

    if discrete:
        for n in A.walk(p):
            if isinstance(n, (A.Dde, A.DdeInterrupt)):
                out.append(Diagnostic("continuous", "continuous statement in a discrete process", n.span))
    return out
