#include "omcl/kernels.hpp"

#include <atomic>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels_detail.hpp"

namespace omcl::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool on) { g_parallel.store(on); }

bool parallel_enabled() {
#ifdef _OPENMP
  return g_parallel.load();
#else
  return false;
#endif
}

namespace serial {

using namespace detail;

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    mm_row_nn(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    mm_row_nt(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    mm_row_tn(a, b, c + static_cast<size_t>(i) * n, i, m, k, n);
}

void conv2d_forward(const double* x, int batch, int h, int w, int ci, const double* wgt,
                    int co, int kh, int kw, const double* bias, int pad, double* y) {
  const int ho = conv_out(h, kh, pad), wo = conv_out(w, kw, pad);
  const size_t in_stride = static_cast<size_t>(h) * w * ci;
  const size_t out_stride = static_cast<size_t>(ho) * wo * co;
  std::vector<double> cols(static_cast<size_t>(ho) * wo * ci * kh * kw);
  for (int b = 0; b < batch; ++b)
    conv_fwd_image(x + b * in_stride, h, w, ci, wgt, co, kh, kw, bias, pad,
                   y + b * out_stride, cols.data());
}

void conv2d_backward_input(const double* g, int batch, int h, int w, int ci,
                           const double* wgt, int co, int kh, int kw, int pad,
                           double* dx) {
  const int ho = conv_out(h, kh, pad), wo = conv_out(w, kw, pad);
  const size_t in_stride = static_cast<size_t>(h) * w * ci;
  const size_t out_stride = static_cast<size_t>(ho) * wo * co;
  std::vector<double> cols(static_cast<size_t>(ho) * wo * ci * kh * kw);
  for (int b = 0; b < batch; ++b)
    conv_dx_image(g + b * out_stride, h, w, ci, wgt, co, kh, kw, pad, dx + b * in_stride,
                  cols.data());
}

void conv2d_backward_filter(const double* g, const double* x, int batch, int h, int w,
                            int ci, int co, int kh, int kw, int pad, double* dw,
                            double* db) {
  const int ho = conv_out(h, kh, pad), wo = conv_out(w, kw, pad);
  const int hw = ho * wo;
  const int kdim = ci * kh * kw;
  const size_t in_stride = static_cast<size_t>(h) * w * ci;
  std::vector<double> cols_all(static_cast<size_t>(batch) * hw * kdim);
  for (int b = 0; b < batch; ++b)
    im2col_image(x + b * in_stride, h, w, ci, kh, kw, pad,
                 cols_all.data() + static_cast<size_t>(b) * hw * kdim);
  for (int oc = 0; oc < co; ++oc)
    conv_dw_row(oc, g, cols_all.data(), batch, hw, co, kdim,
                dw + static_cast<size_t>(oc) * kdim, db);
}

void maxpool2_forward(const double* x, int batch, int h, int w, int ch, double* y,
                      int32_t* argmax) {
  const size_t in_stride = static_cast<size_t>(h) * w * ch;
  const size_t out_stride = static_cast<size_t>(h / 2) * (w / 2) * ch;
  for (int b = 0; b < batch; ++b)
    maxpool_fwd_image(x + b * in_stride, h, w, ch, y + b * out_stride,
                      argmax + b * out_stride);
}

void maxpool2_backward(const double* g, int batch, int h, int w, int ch,
                       const int32_t* argmax, double* dx) {
  const size_t in_stride = static_cast<size_t>(h) * w * ch;
  const size_t out_stride = static_cast<size_t>(h / 2) * (w / 2) * ch;
  for (int b = 0; b < batch; ++b)
    maxpool_bwd_image(g + b * out_stride, h, w, ch, argmax + b * out_stride,
                      dx + b * in_stride);
}

}  // namespace serial

namespace par {

using namespace detail;

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    mm_row_nn(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    mm_row_nt(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    mm_row_tn(a, b, c + static_cast<size_t>(i) * n, i, m, k, n);
}

void conv2d_forward(const double* x, int batch, int h, int w, int ci, const double* wgt,
                    int co, int kh, int kw, const double* bias, int pad, double* y) {
  const int ho = conv_out(h, kh, pad), wo = conv_out(w, kw, pad);
  const size_t in_stride = static_cast<size_t>(h) * w * ci;
  const size_t out_stride = static_cast<size_t>(ho) * wo * co;
  const size_t cols_size = static_cast<size_t>(ho) * wo * ci * kh * kw;
#pragma omp parallel
  {
    std::vector<double> cols(cols_size);
#pragma omp for schedule(static)
    for (int b = 0; b < batch; ++b)
      conv_fwd_image(x + b * in_stride, h, w, ci, wgt, co, kh, kw, bias, pad,
                     y + b * out_stride, cols.data());
  }
}

void conv2d_backward_input(const double* g, int batch, int h, int w, int ci,
                           const double* wgt, int co, int kh, int kw, int pad,
                           double* dx) {
  const int ho = conv_out(h, kh, pad), wo = conv_out(w, kw, pad);
  const size_t in_stride = static_cast<size_t>(h) * w * ci;
  const size_t out_stride = static_cast<size_t>(ho) * wo * co;
  const size_t cols_size = static_cast<size_t>(ho) * wo * ci * kh * kw;
#pragma omp parallel
  {
    std::vector<double> cols(cols_size);
#pragma omp for schedule(static)
    for (int b = 0; b < batch; ++b)
      conv_dx_image(g + b * out_stride, h, w, ci, wgt, co, kh, kw, pad,
                    dx + b * in_stride, cols.data());
  }
}

void conv2d_backward_filter(const double* g, const double* x, int batch, int h, int w,
                            int ci, int co, int kh, int kw, int pad, double* dw,
                            double* db) {
  const int ho = conv_out(h, kh, pad), wo = conv_out(w, kw, pad);
  const int hw = ho * wo;
  const int kdim = ci * kh * kw;
  const size_t in_stride = static_cast<size_t>(h) * w * ci;
  std::vector<double> cols_all(static_cast<size_t>(batch) * hw * kdim);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    im2col_image(x + b * in_stride, h, w, ci, kh, kw, pad,
                 cols_all.data() + static_cast<size_t>(b) * hw * kdim);
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < co; ++oc)
    conv_dw_row(oc, g, cols_all.data(), batch, hw, co, kdim,
                dw + static_cast<size_t>(oc) * kdim, db);
}

void maxpool2_forward(const double* x, int batch, int h, int w, int ch, double* y,
                      int32_t* argmax) {
  const size_t in_stride = static_cast<size_t>(h) * w * ch;
  const size_t out_stride = static_cast<size_t>(h / 2) * (w / 2) * ch;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    maxpool_fwd_image(x + b * in_stride, h, w, ch, y + b * out_stride,
                      argmax + b * out_stride);
}

void maxpool2_backward(const double* g, int batch, int h, int w, int ch,
                       const int32_t* argmax, double* dx) {
  const size_t in_stride = static_cast<size_t>(h) * w * ch;
  const size_t out_stride = static_cast<size_t>(h / 2) * (w / 2) * ch;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    maxpool_bwd_image(g + b * out_stride, h, w, ch, argmax + b * out_stride,
                      dx + b * in_stride);
}

}  // namespace par

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  parallel_enabled() ? par::matmul(a, b, c, m, k, n) : serial::matmul(a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  parallel_enabled() ? par::matmul_nt(a, b, c, m, k, n)
                     : serial::matmul_nt(a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  parallel_enabled() ? par::matmul_tn(a, b, c, m, k, n)
                     : serial::matmul_tn(a, b, c, m, k, n);
}
void im2col(const double* img, int h, int w, int ch, int kh, int kw, int pad,
            double* cols) {
  detail::im2col_image(img, h, w, ch, kh, kw, pad, cols);
}
void col2im(const double* cols, int h, int w, int ch, int kh, int kw, int pad,
            double* img) {
  detail::col2im_image(cols, h, w, ch, kh, kw, pad, img);
}
void conv2d_forward(const double* x, int batch, int h, int w, int ci, const double* wgt,
                    int co, int kh, int kw, const double* bias, int pad, double* y) {
  parallel_enabled()
      ? par::conv2d_forward(x, batch, h, w, ci, wgt, co, kh, kw, bias, pad, y)
      : serial::conv2d_forward(x, batch, h, w, ci, wgt, co, kh, kw, bias, pad, y);
}
void conv2d_backward_input(const double* g, int batch, int h, int w, int ci,
                           const double* wgt, int co, int kh, int kw, int pad,
                           double* dx) {
  parallel_enabled()
      ? par::conv2d_backward_input(g, batch, h, w, ci, wgt, co, kh, kw, pad, dx)
      : serial::conv2d_backward_input(g, batch, h, w, ci, wgt, co, kh, kw, pad, dx);
}
void conv2d_backward_filter(const double* g, const double* x, int batch, int h, int w,
                            int ci, int co, int kh, int kw, int pad, double* dw,
                            double* db) {
  parallel_enabled()
      ? par::conv2d_backward_filter(g, x, batch, h, w, ci, co, kh, kw, pad, dw, db)
      : serial::conv2d_backward_filter(g, x, batch, h, w, ci, co, kh, kw, pad, dw, db);
}
void maxpool2_forward(const double* x, int batch, int h, int w, int ch, double* y,
                      int32_t* argmax) {
  parallel_enabled() ? par::maxpool2_forward(x, batch, h, w, ch, y, argmax)
                     : serial::maxpool2_forward(x, batch, h, w, ch, y, argmax);
}
void maxpool2_backward(const double* g, int batch, int h, int w, int ch,
                       const int32_t* argmax, double* dx) {
  parallel_enabled() ? par::maxpool2_backward(g, batch, h, w, ch, argmax, dx)
                     : serial::maxpool2_backward(g, batch, h, w, ch, argmax, dx);
}

}  // namespace omcl::kernels
