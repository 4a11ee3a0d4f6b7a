# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-item evaluation kernels; see pyref.py for the array layout."""

from libc.math cimport exp, log

import numpy as np

cimport numpy as cnp

cnp.import_array()


def iw_values(double[:, :, ::1] tables, cnp.int64_t[::1] labels):
    cdef Py_ssize_t m = tables.shape[0], k = tables.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(k)
    cdef double[::1] o = out
    cdef Py_ssize_t i, y, l
    for i in range(m):
        l = labels[i]
        for y in range(k):
            o[y] += tables[i, y, l]
    for y in range(k):
        o[y] /= m
    return out


def is_values(double[:, :, ::1] tables, cnp.uint8_t[::1] included,
              cnp.int64_t[::1] labels, double[::1] inv_pi):
    cdef Py_ssize_t m = tables.shape[0], k = tables.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(k)
    cdef double[::1] o = out
    cdef Py_ssize_t i, y, l
    for i in range(m):
        if not included[i]:
            continue
        l = labels[i]
        for y in range(k):
            o[y] += inv_pi[i] * tables[i, y, l]
    for y in range(k):
        o[y] /= m
    return out


def dm_values(double[:, :, ::1] tables, double[:, ::1] softs):
    cdef Py_ssize_t m = tables.shape[0], k = tables.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(k)
    cdef double[::1] o = out
    cdef Py_ssize_t i, y, l
    cdef double acc
    for i in range(m):
        for y in range(k):
            acc = 0.0
            for l in range(k):
                acc += softs[i, l] * tables[i, y, l]
            o[y] += acc
    for y in range(k):
        o[y] /= m
    return out


def dr_values(double[:, :, ::1] tables, double[:, ::1] softs,
              cnp.uint8_t[::1] included, cnp.int64_t[::1] labels,
              double[::1] weights):
    cdef Py_ssize_t m = tables.shape[0], k = tables.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(k)
    cdef double[::1] o = out
    cdef Py_ssize_t i, y, l, lab
    cdef double base, w
    for i in range(m):
        l = labels[i]
        w = weights[i]
        if included[i] and w == 1.0:
            # adding S_i directly keeps the pi=1 identity with IW exact
            for y in range(k):
                o[y] += tables[i, y, l]
            continue
        for y in range(k):
            base = 0.0
            for lab in range(k):
                base += softs[i, lab] * tables[i, y, lab]
            if included[i]:
                o[y] += base + w * (tables[i, y, l] - base)
            else:
                o[y] += base
    for y in range(k):
        o[y] /= m
    return out


def subset_counts(cnp.uint8_t[::1] included, cnp.int64_t[::1] labels,
                  Py_ssize_t k, Py_ssize_t m):
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(k)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(included.shape[0]):
        if included[i]:
            o[labels[i]] += 1.0
    for i in range(k):
        o[i] /= m
    return out


def log_posterior_hard(double[::1] log_prior, double[:, :, ::1] log_mu,
                       cnp.int64_t[::1] obs_workers, cnp.int64_t[::1] obs_labels):
    cdef Py_ssize_t k = log_prior.shape[0], q = obs_workers.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(k)
    cdef double[::1] o = out
    cdef Py_ssize_t t, y
    cdef double mx, total
    for y in range(k):
        o[y] = log_prior[y]
    for t in range(q):
        for y in range(k):
            o[y] += log_mu[obs_workers[t], obs_labels[t], y]
    mx = o[0]
    for y in range(1, k):
        if o[y] > mx:
            mx = o[y]
    total = 0.0
    for y in range(k):
        o[y] = exp(o[y] - mx)
        total += o[y]
    for y in range(k):
        o[y] /= total
    return out


def posterior_soft(double[::1] prior, double[:, :, ::1] mu, double[:, ::1] softs):
    cdef Py_ssize_t m = mu.shape[0], k = mu.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(k)
    cdef double[::1] o = out
    cdef Py_ssize_t i, y, l
    cdef double acc, mx, total
    for y in range(k):
        o[y] = log(prior[y])
    for i in range(m):
        for y in range(k):
            acc = 0.0
            for l in range(k):
                acc += softs[i, l] * mu[i, l, y]
            o[y] += log(acc)
    mx = o[0]
    for y in range(1, k):
        if o[y] > mx:
            mx = o[y]
    total = 0.0
    for y in range(k):
        o[y] = exp(o[y] - mx)
        total += o[y]
    for y in range(k):
        o[y] /= total
    return out


def aws_margins(double[:, :, ::1] mu, double[:, ::1] softs):
    cdef Py_ssize_t m = mu.shape[0], k = mu.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(m)
    cdef double[::1] o = out
    cdef Py_ssize_t i, y, l
    cdef double acc, total, top1, top2
    for i in range(m):
        total = 0.0
        top1 = -1.0
        top2 = -1.0
        for y in range(k):
            acc = 0.0
            for l in range(k):
                acc += softs[i, l] * mu[i, l, y]
            total += acc
            if acc > top1:
                top2 = top1
                top1 = acc
            elif acc > top2:
                top2 = acc
        o[i] = (top1 - top2) / total
    return out
