#include "sab/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sab/math_kernels.hpp"

namespace sab {

namespace {

struct Slot {
    double v;
    int i;
};

// (value desc, index asc): higher value ranks first, ties go to the smaller index
inline bool ranks_before(const Slot& a, const Slot& b) {
    return a.v > b.v || (a.v == b.v && a.i < b.i);
}

int threshold_index_strided(const double* col, int stride, int m, int k_top) {
    if (m <= k_top) {
        // no (k_top+1)-th weight exists; threshold at the minimum
        int best = 0;
        double bv = col[0];
        for (int i = 1; i < m; ++i) {
            const double v = col[std::size_t(i) * stride];
            if (v < bv) {
                bv = v;
                best = i;
            }
        }
        return best;
    }
    const int keep = k_top + 1;
    if (keep <= 32) {
        // small-k: insertion into a fixed buffer of the (k_top+1) best
        Slot best[33];
        int cnt = 0;
        for (int i = 0; i < m; ++i) {
            Slot s{col[std::size_t(i) * stride], i};
            if (cnt == keep && !ranks_before(s, best[cnt - 1])) continue;
            int pos = cnt < keep ? cnt : keep - 1;
            while (pos > 0 && ranks_before(s, best[pos - 1])) {
                best[pos] = best[pos - 1];
                --pos;
            }
            best[pos] = s;
            if (cnt < keep) ++cnt;
        }
        return best[keep - 1].i;
    }
    std::vector<Slot> all(m);
    for (int i = 0; i < m; ++i) all[i] = {col[std::size_t(i) * stride], i};
    std::nth_element(all.begin(), all.begin() + k_top, all.end(), ranks_before);
    return all[k_top].i;
}

}  // namespace

int threshold_index(std::span<const double> raw, int k_top) {
    if (raw.empty()) throw std::invalid_argument("threshold_index: empty input");
    if (k_top < 1) throw std::invalid_argument("threshold_index: k_top must be >= 1");
    return threshold_index_strided(raw.data(), 1, int(raw.size()), k_top);
}

std::vector<double> sparsify(std::span<const double> raw, int k_top) {
    const int idx = threshold_index(raw, k_top);
    const double theta = raw[idx];
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double d = raw[i] - theta;
        out[i] = d > 0.0 ? d : 0.0;
    }
    return out;
}

std::vector<double> normalize_sparse(std::span<const double> sparse, bool* fallback) {
    std::vector<double> out(sparse.size(), 0.0);
    double total = 0.0;
    for (double v : sparse) total += v;
    if (total > 0.0) {
        for (std::size_t i = 0; i < sparse.size(); ++i) out[i] = sparse[i] / total;
        if (fallback) *fallback = false;
    } else {
        out.back() = 1.0;
        if (fallback) *fallback = true;
    }
    return out;
}

std::vector<double> raw_attention(const Tensor& w1, const Tensor& w2, const Tensor& w3,
                                  std::span<const Tensor> memories, const Tensor& h_hat) {
    if (memories.empty()) throw std::invalid_argument("raw_attention: empty memory");
    const int n = h_hat.rows();
    Tensor query(n, 1);
    kern::gemm(false, false, n, 1, w2.cols(), 1.0, w2.data(), w2.cols(), h_hat.data(), 1, 0.0,
               query.data(), 1);
    std::vector<double> out(memories.size());
    Tensor proj(n, 1), z(n, 1);
    for (std::size_t i = 0; i < memories.size(); ++i) {
        kern::gemm(false, false, n, 1, w1.cols(), 1.0, w1.data(), w1.cols(),
                   memories[i].data(), 1, 0.0, proj.data(), 1);
        for (int f = 0; f < n; ++f) proj[f] += query[f];
        kern::vtanh(proj.data(), z.data(), n);
        double a = 0.0;
        for (int f = 0; f < n; ++f) a += w3[f] * z[f];
        out[i] = a;
    }
    return out;
}

Summary summarize(std::span<const Tensor> memories, std::span<const double> sparse) {
    if (memories.empty() || memories.size() != sparse.size())
        throw std::invalid_argument("summarize: memory/weight count mismatch");
    Summary r;
    r.normalized = normalize_sparse(sparse, &r.fallback);
    const int n = memories[0].rows();
    r.s = Tensor(n, 1);
    for (std::size_t i = 0; i < memories.size(); ++i) {
        if (r.normalized[i] == 0.0) continue;
        kern::axpy(n, r.normalized[i], memories[i].data(), r.s.data());
    }
    return r;
}

std::vector<int> AttentionTrace::selected(int col) const {
    std::vector<int> out;
    for (int i = 0; i < normalized.rows(); ++i)
        if (normalized(i, col) > 0.0) out.push_back(i);
    return out;
}

// ---------------- batched kernels ----------------

void score_memories_batch(std::span<const double* const> mem_proj, const double* query_proj,
                          const double* score_row, int n, int batch, double* raw) {
    const int m = int(mem_proj.size());
    const std::size_t nb = std::size_t(n) * batch;
#pragma omp parallel for schedule(static) if (m >= 8)
    for (int i = 0; i < m; ++i) {
        thread_local std::vector<double> z;
        if (z.size() < nb) z.resize(nb);
        const double* u = mem_proj[i];
        for (std::size_t e = 0; e < nb; ++e) z[e] = u[e] + query_proj[e];
        kern::vtanh(z.data(), z.data(), nb);
        double* out = raw + std::size_t(i) * batch;
        std::fill(out, out + batch, 0.0);
        for (int f = 0; f < n; ++f) {
            const double w = score_row[f];
            const double* zr = z.data() + std::size_t(f) * batch;
            for (int b = 0; b < batch; ++b) out[b] += w * zr[b];
        }
    }
}

void sparsify_batch(const double* raw, int m, int batch, int k_top, double* sparse,
                    std::int32_t* theta_idx) {
    for (int b = 0; b < batch; ++b) {
        const int idx = threshold_index_strided(raw + b, batch, m, k_top);
        theta_idx[b] = idx;
        const double theta = raw[std::size_t(idx) * batch + b];
        for (int i = 0; i < m; ++i) {
            const double d = raw[std::size_t(i) * batch + b] - theta;
            sparse[std::size_t(i) * batch + b] = d > 0.0 ? d : 0.0;
        }
    }
}

void mix_batch(const double* weights, std::span<const double* const> memories, int m, int n,
               int batch, double* s_out) {
    std::vector<double> colsum(batch, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* wr = weights + std::size_t(i) * batch;
        for (int b = 0; b < batch; ++b) colsum[b] += wr[b];
    }
    std::fill(s_out, s_out + std::size_t(n) * batch, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* wr = weights + std::size_t(i) * batch;
        bool any = false;
        for (int b = 0; b < batch; ++b)
            if (wr[b] != 0.0) {
                any = true;
                break;
            }
        if (!any) continue;
        const double* mem = memories[i];
        for (int f = 0; f < n; ++f) {
            const double* mr = mem + std::size_t(f) * batch;
            double* sr = s_out + std::size_t(f) * batch;
            for (int b = 0; b < batch; ++b) sr[b] += wr[b] * mr[b];
        }
    }
    const double* last = memories[m - 1];
    for (int b = 0; b < batch; ++b) {
        if (colsum[b] > 0.0) {
            const double inv = 1.0 / colsum[b];
            for (int f = 0; f < n; ++f) s_out[std::size_t(f) * batch + b] *= inv;
        } else {
            for (int f = 0; f < n; ++f)
                s_out[std::size_t(f) * batch + b] = last[std::size_t(f) * batch + b];
        }
    }
}

void normalize_batch(const double* sparse, int m, int batch, double* normalized) {
    for (int b = 0; b < batch; ++b) {
        double total = 0.0;
        for (int i = 0; i < m; ++i) total += sparse[std::size_t(i) * batch + b];
        if (total > 0.0) {
            for (int i = 0; i < m; ++i)
                normalized[std::size_t(i) * batch + b] = sparse[std::size_t(i) * batch + b] / total;
        } else {
            for (int i = 0; i < m; ++i) normalized[std::size_t(i) * batch + b] = 0.0;
            normalized[std::size_t(m - 1) * batch + b] = 1.0;
        }
    }
}

// ---------------- fused tape ops ----------------

namespace detail {

void attn_scores_forward(Tape& tape, Node& n, int k_top, Tensor* raw_out) {
    const Tensor& vq = tape.val(n.parents[0]);
    const Tensor& vw = tape.val(n.parents[1]);
    const int m = int(n.parents.size()) - 2;
    const int dim = vq.rows(), batch = vq.cols();
    std::vector<const double*> ptrs(m);
    for (int i = 0; i < m; ++i) ptrs[i] = tape.val(n.parents[2 + i]).data();

    Tensor raw(m, batch);
    score_memories_batch(ptrs, vq.data(), vw.data(), dim, batch, raw.data());

    n.value = Tensor(m, batch);
    n.aux.resize(batch);
    sparsify_batch(raw.data(), m, batch, k_top, n.value.data(), n.aux.data());
    if (raw_out) *raw_out = std::move(raw);
}

void attn_scores_backward(Tape& tape, const Node& n) {
    const Tensor& g = n.grad;
    const Tensor& weights = n.value;  // sparsified, zero outside the active set
    const Tensor& vq = tape.val(n.parents[0]);
    const Tensor& vw = tape.val(n.parents[1]);
    const int m = int(n.parents.size()) - 2;
    const int dim = vq.rows(), batch = vq.cols();

    Tensor& gq = tape.ensure_grad(n.parents[0]);
    Tensor& gw = tape.ensure_grad(n.parents[1]);

    std::vector<double> zin(dim), z(dim);
    // chain one raw-score contribution d(a[i,b]) = da into u_i, query and w3
    auto chain = [&](int i, int b, double da) {
        const double* u = tape.val(n.parents[2 + i]).data();
        const double* q = vq.data();
        for (int f = 0; f < dim; ++f) zin[f] = u[std::size_t(f) * batch + b] + q[std::size_t(f) * batch + b];
        kern::vtanh(zin.data(), z.data(), dim);
        Tensor& gu = tape.ensure_grad(n.parents[2 + i]);
        for (int f = 0; f < dim; ++f) {
            gw[f] += da * z[f];
            const double t = da * vw[f] * (1.0 - z[f] * z[f]);
            gu[std::size_t(f) * batch + b] += t;
            gq[std::size_t(f) * batch + b] += t;
        }
    };

    for (int b = 0; b < batch; ++b) {
        double gsum = 0.0;
        bool any = false;
        for (int i = 0; i < m; ++i) {
            if (weights(i, b) > 0.0) {
                const double da = g(i, b);
                if (da != 0.0) chain(i, b, da);
                gsum += da;
                any = true;
            }
        }
        // the threshold element is a selected raw weight: it receives the
        // negated sum of the active gradients
        if (any && gsum != 0.0) chain(n.aux[b], b, -gsum);
    }
}

void attn_mix_forward(Tape& tape, Node& n) {
    const Tensor& w = tape.val(n.parents[0]);
    const int m = w.rows(), batch = w.cols();
    const int dim = tape.val(n.parents[1]).rows();
    std::vector<const double*> ptrs(m);
    for (int i = 0; i < m; ++i) ptrs[i] = tape.val(n.parents[1 + i]).data();
    n.value = Tensor(dim, batch);
    mix_batch(w.data(), ptrs, m, dim, batch, n.value.data());
}

void attn_mix_backward(Tape& tape, const Node& n) {
    const Tensor& g = n.grad;
    const Tensor& w = tape.val(n.parents[0]);
    const Tensor& s = n.value;
    const int m = w.rows(), batch = w.cols();
    const int dim = s.rows();

    std::vector<double> colsum(batch, 0.0), inv(batch, 0.0);
    for (int i = 0; i < m; ++i)
        for (int b = 0; b < batch; ++b) colsum[b] += w(i, b);
    for (int b = 0; b < batch; ++b) inv[b] = colsum[b] > 0.0 ? 1.0 / colsum[b] : 0.0;

    // sg[b] = s[:,b] . g[:,b]
    std::vector<double> sg(batch, 0.0);
    for (int f = 0; f < dim; ++f)
        for (int b = 0; b < batch; ++b) sg[b] += s(f, b) * g(f, b);

    Tensor& gw = tape.ensure_grad(n.parents[0]);
    std::vector<double> acc(batch);
    for (int i = 0; i < m; ++i) {
        const Tensor& mem = tape.val(n.parents[1 + i]);
        Tensor& gm = tape.ensure_grad(n.parents[1 + i]);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int f = 0; f < dim; ++f) {
            const double* mr = mem.data() + std::size_t(f) * batch;
            const double* gr = g.data() + std::size_t(f) * batch;
            double* gmr = gm.data() + std::size_t(f) * batch;
            const double* wr = w.data() + std::size_t(i) * batch;
            for (int b = 0; b < batch; ++b) {
                acc[b] += mr[b] * gr[b];
                gmr[b] += wr[b] * inv[b] * gr[b];
            }
        }
        double* gwr = gw.data() + std::size_t(i) * batch;
        for (int b = 0; b < batch; ++b) gwr[b] += (acc[b] - sg[b]) * inv[b];
    }
    // fallback columns pass the gradient straight into the most recent memory
    Tensor& glast = tape.ensure_grad(n.parents[m]);
    for (int b = 0; b < batch; ++b) {
        if (colsum[b] > 0.0) continue;
        for (int f = 0; f < dim; ++f) glast(f, b) += g(f, b);
    }
}

}  // namespace detail

}  // namespace sab
