"""Pure-Python reachability index; the fallback for the compiled ``_core``."""
from __future__ import annotations


class DagIndex:
    """Integer-indexed parent lists with late resolution of dangling parents.

    Vertices may be added before their parents; the parent edge is wired up
    when the parent arrives.
    """

    backend = "python"

    def __init__(self):
        self._id = {}
        self._refs = []
        self._par = []
        self._wait = {}

    def __len__(self):
        return len(self._refs)

    def add(self, ref, parents):
        if ref in self._id:
            return self._id[ref]
        i = len(self._refs)
        self._id[ref] = i
        self._refs.append(ref)
        ps = []
        for p in parents:
            j = self._id.get(p)
            if j is None:
                self._wait.setdefault(p, []).append(i)
            else:
                ps.append(j)
        self._par.append(ps)
        for c in self._wait.pop(ref, ()):
            self._par[c].append(i)
        return i

    def id_of(self, ref):
        return self._id.get(ref, -1)

    def ref_of(self, i):
        return self._refs[i]

    def closure_ids(self, roots):
        par = self._par
        seen = bytearray(len(par))
        stack = [r for r in roots if r >= 0]
        out = []
        while stack:
            i = stack.pop()
            if seen[i]:
                continue
            seen[i] = 1
            out.append(i)
            for p in par[i]:
                if not seen[p]:
                    stack.append(p)
        return out

    def closure(self, roots):
        ids = self.closure_ids([self._id[r] for r in roots if r in self._id])
        refs = self._refs
        return {refs[i] for i in ids}

    def reaches(self, src, dst):
        s = self._id.get(src, -1)
        d = self._id.get(dst, -1)
        if s < 0 or d < 0:
            return False
        if s == d:
            return True
        par = self._par
        seen = bytearray(len(par))
        stack = [s]
        while stack:
            i = stack.pop()
            for p in par[i]:
                if p == d:
                    return True
                if not seen[p]:
                    seen[p] = 1
                    stack.append(p)
        return False
