#include "celldet/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>

namespace celldet::imgproc {

namespace {

// Mirror reflection with edge repeat: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    k[j + radius] = std::exp(-(static_cast<double>(j) * j) / (2.0 * sigma * sigma));
    sum += k[j + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

Raster gaussian_blur(const Raster& r, double sigma_px, Exec ex) {
  if (!(sigma_px > 0.0)) throw param_error("gaussian_blur: sigma must be > 0");
  const std::vector<double> k = gaussian_kernel(sigma_px);
  const int radius = (static_cast<int>(k.size()) - 1) / 2;
  const int h = r.height(), w = r.width(), c = r.channels();

  Raster tmp(h, w, c);
  parallel_for(ex, c * h, [&](int i) {
    const int ch = i / h, y = i % h;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[j + radius] * r.at(ch, y, reflect_index(x + j, w));
      tmp.at(ch, y, x) = acc;
    }
  });

  Raster out(h, w, c);
  out.mpp = r.mpp;
  parallel_for(ex, c * h, [&](int i) {
    const int ch = i / h, y = i % h;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[j + radius] * tmp.at(ch, reflect_index(y + j, h), x);
      out.at(ch, y, x) = acc;
    }
  });
  return out;
}

Raster resize(const Raster& r, int out_h, int out_w, ResizeMode mode, Exec ex) {
  if (out_h < 1 || out_w < 1)
    throw param_error("resize: output extent must be >= 1");
  const int h = r.height(), w = r.width(), c = r.channels();

  auto src_coord = [](int i, int out_n, int in_n) {
    if (out_n == 1) return 0.5 * (in_n - 1);
    return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
  };

  Raster out(out_h, out_w, c);
  if (r.mpp) out.mpp = *r.mpp * (static_cast<double>(w) / out_w);

  parallel_for(ex, c * out_h, [&](int i) {
    const int ch = i / out_h, oy = i % out_h;
    const double sy = src_coord(oy, out_h, h);
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = src_coord(ox, out_w, w);
      if (mode == ResizeMode::nearest) {
        const int ny = std::min(h - 1, static_cast<int>(std::floor(sy + 0.5)));
        const int nx = std::min(w - 1, static_cast<int>(std::floor(sx + 0.5)));
        out.at(ch, oy, ox) = r.at(ch, ny, nx);
      } else {
        const int y0 = std::min(h - 1, static_cast<int>(std::floor(sy)));
        const int x0 = std::min(w - 1, static_cast<int>(std::floor(sx)));
        const int y1 = std::min(h - 1, y0 + 1);
        const int x1 = std::min(w - 1, x0 + 1);
        const double fy = sy - y0, fx = sx - x0;
        const double top = (1.0 - fx) * r.at(ch, y0, x0) + fx * r.at(ch, y0, x1);
        const double bot = (1.0 - fx) * r.at(ch, y1, x0) + fx * r.at(ch, y1, x1);
        out.at(ch, oy, ox) = (1.0 - fy) * top + fy * bot;
      }
    }
  });
  return out;
}

Raster crop(const Raster& r, int x0, int y0, int w, int h) {
  if (w < 1 || h < 1) throw bounds_error("crop: window extent must be >= 1");
  if (x0 < 0 || y0 < 0 || x0 + w > r.width() || y0 + h > r.height())
    throw bounds_error("crop: window outside raster");
  Raster out(h, w, r.channels());
  out.mpp = r.mpp;
  for (int c = 0; c < r.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = r.at(c, y0 + y, x0 + x);
  return out;
}

double otsu_threshold(const Raster& r) {
  require_single_channel(r, "otsu_threshold");
  double lo = r.data()[0], hi = r.data()[0];
  for (double v : r.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo))
    throw degenerate_error("otsu_threshold: raster needs >= 2 distinct values");

  constexpr int kBins = 256;
  std::vector<int64_t> hist(kBins, 0);
  const double scale = kBins / (hi - lo);
  for (double v : r.data()) {
    int b = static_cast<int>((v - lo) * scale);
    hist[std::clamp(b, 0, kBins - 1)] += 1;
  }

  const int64_t total = static_cast<int64_t>(r.size());
  int64_t sum_all = 0;
  for (int b = 0; b < kBins; ++b) sum_all += static_cast<int64_t>(b) * hist[b];

  int best_t = 0;
  double best_var = -1.0;
  int64_t w0 = 0, sum0 = 0;
  for (int t = 0; t < kBins - 1; ++t) {
    w0 += hist[t];
    sum0 += static_cast<int64_t>(t) * hist[t];
    const int64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = static_cast<double>(sum0) / w0;
    const double mu1 = static_cast<double>(sum_all - sum0) / w1;
    const double var = static_cast<double>(w0) * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return lo + (best_t + 1) * (hi - lo) / kBins;
}

namespace {
constexpr int kNbr8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                             {0, 1},   {1, -1}, {1, 0},  {1, 1}};
}

LabelMap connected_components(const BinaryMask& m) {
  const int h = m.height(), w = m.width();
  LabelMap out(h, w);
  std::vector<int> stack;
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.at(y, x) || out.at(y, x) != 0) continue;
      ++next;
      out.at(y, x) = next;
      stack.push_back(y * w + x);
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int cy = idx / w, cx = idx % w;
        for (const auto& d : kNbr8) {
          const int ny = cy + d[0], nx = cx + d[1];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (m.at(ny, nx) && out.at(ny, nx) == 0) {
            out.at(ny, nx) = next;
            stack.push_back(ny * w + nx);
          }
        }
      }
    }
  }
  return out;
}

BinaryMask remove_small_objects_and_fill_holes(const BinaryMask& m,
                                               int min_area) {
  if (min_area < 0)
    throw param_error("remove_small_objects_and_fill_holes: min_area < 0");
  const int h = m.height(), w = m.width();

  const LabelMap cc = connected_components(m);
  std::vector<int64_t> area(static_cast<size_t>(cc.max_label()) + 1, 0);
  for (int v : cc.data()) area[v] += 1;

  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int lbl = cc.at(y, x);
      out.at(y, x) = (lbl > 0 && area[lbl] >= min_area) ? 1 : 0;
    }

  // Flood the border-connected background (4-connectivity); whatever
  // background remains unreached is a hole.
  std::vector<uint8_t> outside(static_cast<size_t>(h) * w, 0);
  std::vector<int> stack;
  auto seed = [&](int y, int x) {
    if (!out.at(y, x) && !outside[static_cast<size_t>(y) * w + x]) {
      outside[static_cast<size_t>(y) * w + x] = 1;
      stack.push_back(y * w + x);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  constexpr int kNbr4[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    const int cy = idx / w, cx = idx % w;
    for (const auto& d : kNbr4) {
      const int ny = cy + d[0], nx = cx + d[1];
      if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
      seed(ny, nx);
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!out.at(y, x) && !outside[static_cast<size_t>(y) * w + x])
        out.at(y, x) = 1;
  return out;
}

Raster euclidean_distance_transform(const BinaryMask& m, Exec ex) {
  const int h = m.height(), w = m.width();
  const double inf_sq = static_cast<double>(h) * h + static_cast<double>(w) * w;

  // Column pass: squared distance to the nearest background pixel within
  // the same column, inf_sq if the column has none.
  std::vector<double> colsq(static_cast<size_t>(h) * w);
  parallel_for(ex, w, [&](int x) {
    const int none = h + w;
    int d = none;
    for (int y = 0; y < h; ++y) {
      d = m.at(y, x) ? (d < none ? d + 1 : none) : 0;
      colsq[static_cast<size_t>(y) * w + x] = d;
    }
    d = none;
    for (int y = h - 1; y >= 0; --y) {
      d = m.at(y, x) ? (d < none ? d + 1 : none) : 0;
      double& cur = colsq[static_cast<size_t>(y) * w + x];
      cur = std::min(cur, static_cast<double>(d));
      cur = cur >= none ? inf_sq : cur * cur;
    }
  });

  // Row pass: lower envelope of parabolas (x - x')^2 + colsq(y, x').
  Raster out(h, w);
  parallel_for(ex, h, [&](int y) {
    const double* f = &colsq[static_cast<size_t>(y) * w];
    std::vector<int> v(w);
    std::vector<double> z(w + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -1e300;
    z[1] = 1e300;
    for (int q = 1; q < w; ++q) {
      double s;
      for (;;) {
        const int p = v[k];
        s = ((f[q] + static_cast<double>(q) * q) -
             (f[p] + static_cast<double>(p) * p)) /
            (2.0 * (q - p));
        if (s > z[k]) break;
        --k;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = 1e300;
    }
    k = 0;
    for (int x = 0; x < w; ++x) {
      while (z[k + 1] < x) ++k;
      const double dx = x - v[k];
      out.at(y, x) = std::sqrt(dx * dx + f[v[k]]);
    }
  });
  return out;
}

std::vector<PixelPoint> peak_local_max(const Raster& r, int min_distance,
                                       double threshold_abs) {
  require_single_channel(r, "peak_local_max");
  if (min_distance < 1) throw param_error("peak_local_max: min_distance < 1");
  const int h = r.height(), w = r.width();

  struct Cand {
    double value;
    int y, x;
  };
  std::vector<Cand> cands;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (r.at(y, x) >= threshold_abs) cands.push_back({r.at(y, x), y, x});

  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  // Bucket grid with cell size min_distance: any conflicting accepted peak
  // lies in one of the 3x3 neighboring cells.
  const int cell = min_distance;
  const int gw = (w + cell - 1) / cell, gh = (h + cell - 1) / cell;
  std::vector<std::vector<PixelPoint>> grid(static_cast<size_t>(gw) * gh);
  const int64_t md_sq = static_cast<int64_t>(min_distance) * min_distance;

  std::vector<PixelPoint> accepted;
  for (const Cand& c : cands) {
    const int gy = c.y / cell, gx = c.x / cell;
    bool ok = true;
    for (int dy = -1; dy <= 1 && ok; ++dy)
      for (int dx = -1; dx <= 1 && ok; ++dx) {
        const int ny = gy + dy, nx = gx + dx;
        if (ny < 0 || ny >= gh || nx < 0 || nx >= gw) continue;
        for (const PixelPoint& p : grid[static_cast<size_t>(ny) * gw + nx]) {
          const int64_t ddx = p.x - c.x, ddy = p.y - c.y;
          if (ddx * ddx + ddy * ddy < md_sq) {
            ok = false;
            break;
          }
        }
      }
    if (ok) {
      accepted.push_back({c.x, c.y});
      grid[static_cast<size_t>(gy) * gw + gx].push_back({c.x, c.y});
    }
  }
  return accepted;
}

LabelMap watershed(const Raster& elevation, const LabelMap& markers,
                   const BinaryMask& mask) {
  require_single_channel(elevation, "watershed");
  const int h = elevation.height(), w = elevation.width();
  if (markers.height() != h || markers.width() != w || mask.height() != h ||
      mask.width() != w)
    throw param_error("watershed: elevation, markers, mask shapes differ");

  struct Entry {
    double elev;
    uint64_t seq;
    int idx;
    int label;
  };
  auto cmp = [](const Entry& a, const Entry& b) {
    if (a.elev != b.elev) return a.elev > b.elev;  // min-heap on elevation
    return a.seq > b.seq;                          // FIFO among equals
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> queue(cmp);

  LabelMap out(h, w);
  uint64_t seq = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int lbl = markers.at(y, x);
      if (lbl == 0) continue;
      if (!mask.at(y, x))
        throw param_error("watershed: marker outside mask");
      queue.push({elevation.at(y, x), seq++, y * w + x, lbl});
    }

  while (!queue.empty()) {
    const Entry e = queue.top();
    queue.pop();
    if (out.data()[e.idx] != 0) continue;
    out.data()[e.idx] = e.label;
    const int cy = e.idx / w, cx = e.idx % w;
    for (const auto& d : kNbr8) {
      const int ny = cy + d[0], nx = cx + d[1];
      if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
      if (mask.at(ny, nx) && out.at(ny, nx) == 0)
        queue.push({elevation.at(ny, nx), seq++, ny * w + nx, e.label});
    }
  }
  return out;
}

std::vector<std::pair<int, PixelPoint>> center_of_mass(const LabelMap& labels) {
  struct Acc {
    int64_t sx = 0, sy = 0, n = 0;
  };
  std::map<int, Acc> accs;
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x) {
      const int lbl = labels.at(y, x);
      if (lbl <= 0) continue;
      Acc& a = accs[lbl];
      a.sx += x;
      a.sy += y;
      a.n += 1;
    }
  std::vector<std::pair<int, PixelPoint>> out;
  out.reserve(accs.size());
  for (const auto& [lbl, a] : accs) {
    const int cx = static_cast<int>(std::floor(static_cast<double>(a.sx) / a.n + 0.5));
    const int cy = static_cast<int>(std::floor(static_cast<double>(a.sy) / a.n + 0.5));
    out.push_back({lbl, {cx, cy}});
  }
  return out;
}

}  // namespace celldet::imgproc
