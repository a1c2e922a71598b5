#pragma once

#include <cstdint>

// Dense numeric kernels behind the graph operators.
//
// Each kernel exists twice: a serial reference in kernels::serial and an
// OpenMP variant in kernels::par. Both call the same per-row / per-image
// worker functions, and the parallel variants only split independent output
// rows or images across threads, so the two produce bit-identical results
// at any thread count. The unqualified functions dispatch on set_parallel().
//
// Images use HWC layout: x[b][y][x][c], row-major.
namespace omcl::kernels {

void set_parallel(bool on);
bool parallel_enabled();

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
// c[m,n] = a[m,k] * b[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
// c[m,n] = a[k,m]^T * b[k,n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);

// 3x3-style patch extraction, stride 1, zero padding.
// cols has shape [h_out*w_out, ch*kh*kw] with the (ky, kx, c) index fastest.
void im2col(const double* img, int h, int w, int ch, int kh, int kw, int pad, double* cols);
// Adjoint of im2col: scatters cols back into img (img must be zeroed).
void col2im(const double* cols, int h, int w, int ch, int kh, int kw, int pad, double* img);

// y[b, ho, wo, co], weights w[co, kh, kw, ci], optional bias[co] (may be null).
void conv2d_forward(const double* x, int batch, int h, int w, int ci, const double* wgt,
                    int co, int kh, int kw, const double* bias, int pad, double* y);
void conv2d_backward_input(const double* g, int batch, int h, int w, int ci,
                           const double* wgt, int co, int kh, int kw, int pad, double* dx);
// dw[co, kh, kw, ci] and db[co] are accumulated from zero. db may be null.
void conv2d_backward_filter(const double* g, const double* x, int batch, int h, int w,
                            int ci, int co, int kh, int kw, int pad, double* dw, double* db);

// 2x2 max pooling, stride 2, floor semantics for odd h/w.
// argmax records the flat input index per output element.
void maxpool2_forward(const double* x, int batch, int h, int w, int ch, double* y,
                      int32_t* argmax);
void maxpool2_backward(const double* g, int batch, int h, int w, int ch,
                       const int32_t* argmax, double* dx);

namespace serial {
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void conv2d_forward(const double* x, int batch, int h, int w, int ci, const double* wgt,
                    int co, int kh, int kw, const double* bias, int pad, double* y);
void conv2d_backward_input(const double* g, int batch, int h, int w, int ci,
                           const double* wgt, int co, int kh, int kw, int pad, double* dx);
void conv2d_backward_filter(const double* g, const double* x, int batch, int h, int w,
                            int ci, int co, int kh, int kw, int pad, double* dw, double* db);
void maxpool2_forward(const double* x, int batch, int h, int w, int ch, double* y,
                      int32_t* argmax);
void maxpool2_backward(const double* g, int batch, int h, int w, int ch,
                       const int32_t* argmax, double* dx);
}  // namespace serial

namespace par {
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void conv2d_forward(const double* x, int batch, int h, int w, int ci, const double* wgt,
                    int co, int kh, int kw, const double* bias, int pad, double* y);
void conv2d_backward_input(const double* g, int batch, int h, int w, int ci,
                           const double* wgt, int co, int kh, int kw, int pad, double* dx);
void conv2d_backward_filter(const double* g, const double* x, int batch, int h, int w,
                            int ci, int co, int kh, int kw, int pad, double* dw, double* db);
void maxpool2_forward(const double* x, int batch, int h, int w, int ch, double* y,
                      int32_t* argmax);
void maxpool2_backward(const double* g, int batch, int h, int w, int ch,
                       const int32_t* argmax, double* dx);
}  // namespace par

}  // namespace omcl::kernels
