# cython: language_level=3, boundscheck=False, wraparound=False
# distutils: language = c++
"""Compiled reachability index; same interface as ``_pycore.DagIndex``."""
from libcpp.vector cimport vector


cdef class DagIndex:
    cdef dict _id
    cdef list _refs
    cdef dict _wait
    cdef vector[vector[int]] _par
    cdef vector[char] _seen
    cdef vector[int] _stack

    backend = "cython"

    def __init__(self):
        self._id = {}
        self._refs = []
        self._wait = {}

    def __len__(self):
        return len(self._refs)

    def add(self, ref, parents):
        cdef int i, j
        cdef object jj
        if ref in self._id:
            return self._id[ref]
        i = len(self._refs)
        self._id[ref] = i
        self._refs.append(ref)
        self._par.push_back(vector[int]())
        for p in parents:
            jj = self._id.get(p)
            if jj is None:
                self._wait.setdefault(p, []).append(i)
            else:
                self._par[i].push_back(<int>jj)
        for c in self._wait.pop(ref, ()):
            self._par[<int>c].push_back(i)
        return i

    def id_of(self, ref):
        return self._id.get(ref, -1)

    def ref_of(self, int i):
        return self._refs[i]

    cdef vector[int] _closure(self, list roots):
        cdef vector[int] out
        cdef int n = self._par.size()
        cdef int i, p
        cdef size_t k
        self._seen.assign(n, 0)
        self._stack.clear()
        for r in roots:
            if r >= 0:
                self._stack.push_back(<int>r)
        while not self._stack.empty():
            i = self._stack.back()
            self._stack.pop_back()
            if self._seen[i]:
                continue
            self._seen[i] = 1
            out.push_back(i)
            for k in range(self._par[i].size()):
                p = self._par[i][k]
                if not self._seen[p]:
                    self._stack.push_back(p)
        return out

    def closure_ids(self, roots):
        return list(self._closure(list(roots)))

    def closure(self, roots):
        cdef vector[int] ids = self._closure(
            [self._id[r] for r in roots if r in self._id])
        cdef list refs = self._refs
        return {refs[i] for i in ids}

    def reaches(self, src, dst):
        cdef int s = self._id.get(src, -1)
        cdef int d = self._id.get(dst, -1)
        cdef int i, p
        cdef size_t k
        if s < 0 or d < 0:
            return False
        if s == d:
            return True
        self._seen.assign(self._par.size(), 0)
        self._stack.clear()
        self._stack.push_back(s)
        while not self._stack.empty():
            i = self._stack.back()
            self._stack.pop_back()
            for k in range(self._par[i].size()):
                p = self._par[i][k]
                if p == d:
                    return True
                if not self._seen[p]:
                    self._seen[p] = 1
                    self._stack.push_back(p)
        return False
