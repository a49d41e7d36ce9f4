"""Token matching of emitted code against the reference listings.

Listings are compared after whitespace normalisation.  Identifiers that are
not part of C++ or the SystemC API may be renamed, as long as the renaming
is one-to-one.  ``io_i;`` and ``SC(Q[k]);`` stand for arbitrary balanced
code.  Ellipses are expanded for a concrete channel count.
"""

import re

RESERVED = {"int", "for", "if", "else", "return", "break", "wait", "SC_ZERO_TIME", "posedge_event", "notify",
            "read", "write", "sizeof"}
HOLE = "<hole>"
_TOKEN = re.compile(r"//[^\n]*|\.\.\.|&&|\|\||\+\+|==|!=|<=|>=|[A-Za-z_]\w*|\d+\.?\d*|\S")


def expand(listing, k):
    def posedges(_):
        terms = ["IO_d[%d].posedge_event()" % j for j in range(k)]
        if k > 1:
            terms[-1] = "IO_d[chan_num-1].posedge_event()"
        return "|".join(terms)
    out = re.sub(r"IO_d\[0\]\.posedge_event\(\)\|\.\.\.\|\s*IO_d\[chan_num-1\]\.posedge_event\(\)", posedges, listing)
    out = out.replace("IO[0]&&!IO_d[0]&&...", "&&".join("IO[%d]&&!IO_d[%d]" % (j, j) for j in range(k)))
    return out


def tokens(text):
    return [t.strip() if t.startswith("//") else t for t in _TOKEN.findall(text)]


def template(listing, k=1):
    toks = tokens(expand(listing, k))
    out, i = [], 0
    while i < len(toks):
        if toks[i:i + 2] == ["io_i", ";"]:
            out.append(HOLE)
            i += 2
        elif toks[i:i + 8] == ["SC", "(", "Q", "[", "k", "]", ")", ";"]:
            out.append(HOLE)
            i += 8
        else:
            out.append(toks[i])
            i += 1
    return out


def _ident(t):
    return re.fullmatch(r"[A-Za-z_]\w*", t) is not None


def _balanced(toks):
    depth = 0
    for t in toks:
        if t in "({[":
            depth += 1
        elif t in ")}]":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def match(tpl, toks):
    """True when toks is an instance of the template."""
    def go(i, j, fwd, back):
        if i == len(tpl):
            return j == len(toks)
        t = tpl[i]
        if t == HOLE:
            for end in range(j, len(toks) + 1):
                if _balanced(toks[j:end]) and go(i + 1, end, fwd, back):
                    return True
            return False
        if j >= len(toks):
            return False
        u = toks[j]
        if _ident(t) and t not in RESERVED:
            if not _ident(u) or u in RESERVED:
                return False
            if fwd.get(t, u) != u or back.get(u, t) != t:
                return False
            return go(i + 1, j + 1, {**fwd, t: u}, {**back, u: t})
        return t == u and go(i + 1, j + 1, fwd, back)
    return go(0, 0, {}, {})


def fragment(emitted):
    """The part of an emitted block starting at its listing comment."""
    k = emitted.index("// code for")
    return emitted[k:]
