# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-plane convolution kernels (valid padding, square stride)."""
import numpy as np

ctypedef fused real:
    float
    double


def conv_forward(real[:, ::1] x, real[:, :, ::1] w, real[::1] b, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], nf = w.shape[0], k = w.shape[1]
    cdef Py_ssize_t out = (n - k) // stride + 1
    cdef Py_ssize_t i, j, f, u, v, r, c
    cdef real acc
    dtype = np.float32 if real is float else np.float64
    z_arr = np.empty((out, out, nf), dtype=dtype)
    cdef real[:, :, ::1] z = z_arr
    for i in range(out):
        r = i * stride
        for j in range(out):
            c = j * stride
            for f in range(nf):
                acc = b[f]
                for u in range(k):
                    for v in range(k):
                        acc = acc + w[f, u, v] * x[r + u, c + v]
                z[i, j, f] = acc
    return z_arr


def conv_backward(real[:, ::1] x, real[:, :, ::1] dz, Py_ssize_t stride, Py_ssize_t k):
    cdef Py_ssize_t out = dz.shape[0], nf = dz.shape[2]
    cdef Py_ssize_t i, j, f, u, v, r, c
    cdef real g
    dtype = np.float32 if real is float else np.float64
    dw_arr = np.zeros((nf, k, k), dtype=dtype)
    db_arr = np.zeros(nf, dtype=dtype)
    cdef real[:, :, ::1] dw = dw_arr
    cdef real[::1] db = db_arr
    for i in range(out):
        r = i * stride
        for j in range(out):
            c = j * stride
            for f in range(nf):
                g = dz[i, j, f]
                if g == 0:
                    continue
                db[f] = db[f] + g
                for u in range(k):
                    for v in range(k):
                        dw[f, u, v] = dw[f, u, v] + g * x[r + u, c + v]
    return dw_arr, db_arr
