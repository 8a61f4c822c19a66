# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled P1 element kernels (same interface as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def element_geometry(const double[:, ::1] nodes, const cnp.int64_t[:, ::1] triangles):
    cdef Py_ssize_t nt = triangles.shape[0], e, i, j, k
    cdef double x[3]
    cdef double y[3]
    cdef double a2
    area_arr = np.empty(nt)
    grads_arr = np.empty((nt, 3, 2))
    cdef double[::1] area = area_arr
    cdef double[:, :, ::1] grads = grads_arr
    for e in range(nt):
        for i in range(3):
            x[i] = nodes[triangles[e, i], 0]
            y[i] = nodes[triangles[e, i], 1]
        a2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
        area[e] = 0.5 * a2
        for i in range(3):
            j = (i + 1) % 3
            k = (i + 2) % 3
            grads[e, i, 0] = (y[j] - y[k]) / a2
            grads[e, i, 1] = (x[k] - x[j]) / a2
    return area_arr, grads_arr


cdef inline void _scatter_local(double[::1] data, const cnp.int64_t[::1] slots, Py_ssize_t e,
                                double area, const double[:, :, ::1] grads,
                                double c00, double c01, double c10, double c11) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double gx, gy
    for i in range(3):
        for j in range(3):
            gx = c00 * grads[e, j, 0] + c01 * grads[e, j, 1]
            gy = c10 * grads[e, j, 0] + c11 * grads[e, j, 1]
            data[slots[9 * e + 3 * i + j]] += area * (grads[e, i, 0] * gx + grads[e, i, 1] * gy)


def stiffness_data(const double[::1] area, const double[:, :, ::1] grads, const double[:, :, ::1] coef,
                   const cnp.int64_t[::1] slots, Py_ssize_t nnz):
    cdef Py_ssize_t nt = area.shape[0], e
    data_arr = np.zeros(nnz)
    cdef double[::1] data = data_arr
    with nogil:
        for e in range(nt):
            _scatter_local(data, slots, e, area[e], grads,
                           coef[e, 0, 0], coef[e, 0, 1], coef[e, 1, 0], coef[e, 1, 1])
    return data_arr


def pmc_residual_jacobian(const cnp.int64_t[:, ::1] triangles, const double[::1] area,
                          const double[:, :, ::1] grads, const double[::1] u,
                          const cnp.int64_t[::1] slots, Py_ssize_t nnz):
    cdef Py_ssize_t nt = area.shape[0], e, i
    cdef double gx, gy, s2, s, s3, fx, fy
    res_arr = np.zeros(u.shape[0])
    data_arr = np.zeros(nnz)
    cdef double[::1] res = res_arr
    cdef double[::1] data = data_arr
    with nogil:
        for e in range(nt):
            gx = 0.0
            gy = 0.0
            for i in range(3):
                gx = gx + u[triangles[e, i]] * grads[e, i, 0]
                gy = gy + u[triangles[e, i]] * grads[e, i, 1]
            s2 = 1.0 + gx * gx + gy * gy
            s = sqrt(s2)
            s3 = s2 * s
            fx = gx / s
            fy = gy / s
            for i in range(3):
                res[triangles[e, i]] += (grads[e, i, 0] * fx + grads[e, i, 1] * fy) * area[e]
            _scatter_local(data, slots, e, area[e], grads,
                           1.0 / s - gx * gx / s3, -gx * gy / s3,
                           -gx * gy / s3, 1.0 / s - gy * gy / s3)
    return res_arr, data_arr
