#include "kernels_detail.hpp"

#include <cstring>

namespace omcl::kernels::detail {

void mm_row_nn(const double* a_row, const double* b, double* c_row, int k, int n) {
  std::memset(c_row, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double a = a_row[p];
    const double* b_row = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
  }
}

void mm_row_nt(const double* a_row, const double* b, double* c_row, int k, int n) {
  for (int j = 0; j < n; ++j) {
    const double* b_row = b + static_cast<size_t>(j) * k;
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = acc;
  }
}

void mm_row_tn(const double* a, const double* b, double* c_row, int i, int m, int k,
               int n) {
  std::memset(c_row, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double a_pi = a[static_cast<size_t>(p) * m + i];
    const double* b_row = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) c_row[j] += a_pi * b_row[j];
  }
}

void im2col_image(const double* img, int h, int w, int ch, int kh, int kw, int pad,
                  double* cols) {
  const int ho = conv_out(h, kh, pad);
  const int wo = conv_out(w, kw, pad);
  double* out = cols;
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      for (int ky = 0; ky < kh; ++ky) {
        const int sy = y + ky - pad;
        for (int kx = 0; kx < kw; ++kx) {
          const int sx = x + kx - pad;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            for (int c = 0; c < ch; ++c) *out++ = 0.0;
          } else {
            const double* src = img + (static_cast<size_t>(sy) * w + sx) * ch;
            for (int c = 0; c < ch; ++c) *out++ = src[c];
          }
        }
      }
    }
  }
}

void col2im_image(const double* cols, int h, int w, int ch, int kh, int kw, int pad,
                  double* img) {
  const int ho = conv_out(h, kh, pad);
  const int wo = conv_out(w, kw, pad);
  const double* in = cols;
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      for (int ky = 0; ky < kh; ++ky) {
        const int sy = y + ky - pad;
        for (int kx = 0; kx < kw; ++kx) {
          const int sx = x + kx - pad;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            in += ch;
          } else {
            double* dst = img + (static_cast<size_t>(sy) * w + sx) * ch;
            for (int c = 0; c < ch; ++c) dst[c] += *in++;
          }
        }
      }
    }
  }
}

void conv_fwd_image(const double* x_img, int h, int w, int ci, const double* wgt, int co,
                    int kh, int kw, const double* bias, int pad, double* y_img,
                    double* cols_scratch) {
  const int ho = conv_out(h, kh, pad);
  const int wo = conv_out(w, kw, pad);
  const int hw = ho * wo;
  const int kdim = ci * kh * kw;
  im2col_image(x_img, h, w, ci, kh, kw, pad, cols_scratch);
  for (int p = 0; p < hw; ++p) {
    double* y_row = y_img + static_cast<size_t>(p) * co;
    mm_row_nt(cols_scratch + static_cast<size_t>(p) * kdim, wgt, y_row, kdim, co);
    if (bias)
      for (int c = 0; c < co; ++c) y_row[c] += bias[c];
  }
}

void conv_dx_image(const double* g_img, int h, int w, int ci, const double* wgt, int co,
                   int kh, int kw, int pad, double* dx_img, double* cols_scratch) {
  const int ho = conv_out(h, kh, pad);
  const int wo = conv_out(w, kw, pad);
  const int hw = ho * wo;
  const int kdim = ci * kh * kw;
  for (int p = 0; p < hw; ++p)
    mm_row_nn(g_img + static_cast<size_t>(p) * co, wgt,
              cols_scratch + static_cast<size_t>(p) * kdim, co, kdim);
  std::memset(dx_img, 0, sizeof(double) * static_cast<size_t>(h) * w * ci);
  col2im_image(cols_scratch, h, w, ci, kh, kw, pad, dx_img);
}

void conv_dw_row(int oc, const double* g, const double* cols_all, int batch, int hw,
                 int co, int kdim, double* dw_row, double* db) {
  std::memset(dw_row, 0, sizeof(double) * static_cast<size_t>(kdim));
  double bias_acc = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* g_img = g + static_cast<size_t>(b) * hw * co;
    const double* cols = cols_all + static_cast<size_t>(b) * hw * kdim;
    for (int p = 0; p < hw; ++p) {
      const double coef = g_img[static_cast<size_t>(p) * co + oc];
      bias_acc += coef;
      if (coef == 0.0) continue;
      const double* col_row = cols + static_cast<size_t>(p) * kdim;
      for (int q = 0; q < kdim; ++q) dw_row[q] += coef * col_row[q];
    }
  }
  if (db) db[oc] = bias_acc;
}

void maxpool_fwd_image(const double* x_img, int h, int w, int ch, double* y_img,
                       int32_t* argmax_img) {
  const int ho = h / 2, wo = w / 2;
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      for (int c = 0; c < ch; ++c) {
        int32_t best_idx = -1;
        double best = 0.0;
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            const int32_t idx =
                static_cast<int32_t>(((2 * y + ky) * w + (2 * x + kx)) * ch + c);
            const double v = x_img[idx];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        const size_t o = (static_cast<size_t>(y) * wo + x) * ch + c;
        y_img[o] = best;
        argmax_img[o] = best_idx;
      }
    }
  }
}

void maxpool_bwd_image(const double* g_img, int h, int w, int ch,
                       const int32_t* argmax_img, double* dx_img) {
  const int ho = h / 2, wo = w / 2;
  const size_t out_count = static_cast<size_t>(ho) * wo * ch;
  for (size_t o = 0; o < out_count; ++o) dx_img[argmax_img[o]] += g_img[o];
}

}  // namespace omcl::kernels::detail
