#pragma once

#include "ct/kernels.hpp"

// Naive serial transcriptions of the kernel contracts. Kept only for tests
// and the kernel benchmark; never linked into the main library.
namespace ct::refkernels {

template <typename T>
void conv3d_forward(const ct::kernels::Conv3dGeom& g, const T* x, const T* w,
                    const T* bias, T* y);

template <typename T>
void conv_pt_forward(const ct::kernels::ConvPtGeom& g, const T* x, const T* w,
                     const T* bias, T* y);

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
            std::size_t n);

template <typename T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n,
             std::size_t inner);

}  // namespace ct::refkernels
