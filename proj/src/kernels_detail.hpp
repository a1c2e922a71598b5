#pragma once

#include <cstdint>
#include <vector>

// Shared per-row / per-image workers. Both the serial and the OpenMP kernel
// variants funnel through these; they are kept out-of-line so the compiler
// emits exactly one copy of each floating-point reduction and the two
// variants cannot diverge in rounding.
namespace omcl::kernels::detail {

#define OMCL_NOINLINE __attribute__((noinline))

OMCL_NOINLINE void mm_row_nn(const double* a_row, const double* b, double* c_row, int k,
                             int n);
OMCL_NOINLINE void mm_row_nt(const double* a_row, const double* b, double* c_row, int k,
                             int n);
OMCL_NOINLINE void mm_row_tn(const double* a, const double* b, double* c_row, int i,
                             int m, int k, int n);

OMCL_NOINLINE void im2col_image(const double* img, int h, int w, int ch, int kh, int kw,
                                int pad, double* cols);
OMCL_NOINLINE void col2im_image(const double* cols, int h, int w, int ch, int kh, int kw,
                                int pad, double* img);

OMCL_NOINLINE void conv_fwd_image(const double* x_img, int h, int w, int ci,
                                  const double* wgt, int co, int kh, int kw,
                                  const double* bias, int pad, double* y_img,
                                  double* cols_scratch);
OMCL_NOINLINE void conv_dx_image(const double* g_img, int h, int w, int ci,
                                 const double* wgt, int co, int kh, int kw, int pad,
                                 double* dx_img, double* cols_scratch);
// Accumulates one output-channel row of dw (and db[co]) over the whole batch.
OMCL_NOINLINE void conv_dw_row(int oc, const double* g, const double* cols_all, int batch,
                               int hw, int co, int kdim, double* dw_row, double* db);

OMCL_NOINLINE void maxpool_fwd_image(const double* x_img, int h, int w, int ch,
                                     double* y_img, int32_t* argmax_img);
OMCL_NOINLINE void maxpool_bwd_image(const double* g_img, int h, int w, int ch,
                                     const int32_t* argmax_img, double* dx_img);

inline int conv_out(int size, int k, int pad) { return size + 2 * pad - k + 1; }

}  // namespace omcl::kernels::detail
