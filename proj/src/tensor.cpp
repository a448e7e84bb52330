#include "tadml/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace tadml {

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
}

Tensor::Tensor(std::vector<std::size_t> shape, bool requires_grad) {
    d_ = std::make_shared<TensorData>();
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    d_->shape = std::move(shape);
    d_->values.assign(n, 0.0);
    d_->requires_grad = requires_grad;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    if (n != values.size())
        throw DimensionError("Tensor::from: shape/value count mismatch");
    Tensor t(std::move(shape));
    t.d_->values = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("Tensor::item: not a scalar");
    return d_->values[0];
}

std::vector<double>& Tensor::ensure_grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = d_->shape;
    t.d_->values = d_->values;
    t.d_->requires_grad = d_->requires_grad;
    return t;
}

void Tensor::check_finite(const char* what) const {
    for (double v : d_->values) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << what << ": non-finite value encountered";
            throw NumericError(os.str());
        }
    }
}

void Tape::backward(Tensor& loss) {
    if (consumed_)
        throw std::logic_error("Tape::backward: tape already consumed");
    if (loss.numel() != 1)
        throw DimensionError("Tape::backward: loss must be a scalar");
    consumed_ = true;
    loss.ensure_grad()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

namespace {

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) throw DimensionError(std::string(what) + ": expected 2-D tensor");
}

}  // namespace

Tensor fc(Tape* tape, const Tensor& x, const Tensor& W, const Tensor& b) {
    require_2d(x, "fc(x)");
    require_2d(W, "fc(W)");
    const std::size_t T = x.rows(), din = x.cols();
    const std::size_t dout = W.cols();
    if (W.rows() != din)
        throw DimensionError("fc: inner dimensions disagree");
    if (b.numel() != dout)
        throw DimensionError("fc: bias length mismatch");

    Tensor y({T, dout});
    const auto& xv = x.values();
    const auto& wv = W.values();
    const auto& bv = b.values();
    auto& yv = y.values();
    for (std::size_t t = 0; t < T; ++t) {
        double* yrow = yv.data() + t * dout;
        for (std::size_t j = 0; j < dout; ++j) yrow[j] = bv[j];
        const double* xrow = xv.data() + t * din;
        for (std::size_t i = 0; i < din; ++i) {
            const double xi = xrow[i];
            if (xi == 0.0) continue;
            const double* wrow = wv.data() + i * dout;
            for (std::size_t j = 0; j < dout; ++j) yrow[j] += xi * wrow[j];
        }
    }
    y.check_finite("fc");

    if (tape) {
        Tensor xc = x, wc = W, bc = b, yc = y;
        tape->record([xc, wc, bc, yc, T, din, dout]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& gx = xc.ensure_grad();
            auto& gw = wc.ensure_grad();
            auto& gb = bc.ensure_grad();
            const auto& xv = xc.values();
            const auto& wv = wc.values();
            for (std::size_t t = 0; t < T; ++t) {
                const double* gyrow = gy.data() + t * dout;
                const double* xrow = xv.data() + t * din;
                double* gxrow = gx.data() + t * din;
                for (std::size_t j = 0; j < dout; ++j) gb[j] += gyrow[j];
                for (std::size_t i = 0; i < din; ++i) {
                    const double* wrow = wv.data() + i * dout;
                    double* gwrow = gw.data() + i * dout;
                    double acc = 0.0;
                    const double xi = xrow[i];
                    for (std::size_t j = 0; j < dout; ++j) {
                        acc += gyrow[j] * wrow[j];
                        gwrow[j] += xi * gyrow[j];
                    }
                    gxrow[i] += acc;
                }
            }
        });
    }
    return y;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, double eps) {
    require_2d(x, "layer_norm");
    const std::size_t T = x.rows(), D = x.cols();
    if (gamma.numel() != D || beta.numel() != D)
        throw DimensionError("layer_norm: gamma/beta length mismatch");
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");

    Tensor y({T, D});
    std::vector<double> inv_std(T), means(T);
    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    auto& yv = y.values();
    for (std::size_t t = 0; t < T; ++t) {
        const double* row = xv.data() + t * D;
        double mean = 0.0;
        for (std::size_t j = 0; j < D; ++j) mean += row[j];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(D);
        const double istd = 1.0 / std::sqrt(var + eps);
        means[t] = mean;
        inv_std[t] = istd;
        double* yrow = yv.data() + t * D;
        for (std::size_t j = 0; j < D; ++j)
            yrow[j] = gv[j] * (row[j] - mean) * istd + bv[j];
    }
    y.check_finite("layer_norm");

    if (tape) {
        Tensor xc = x, gc = gamma, bc = beta, yc = y;
        tape->record([xc, gc, bc, yc, T, D, means, inv_std]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& gx = xc.ensure_grad();
            auto& gg = gc.ensure_grad();
            auto& gb = bc.ensure_grad();
            const auto& xv = xc.values();
            const auto& gv = gc.values();
            const double dN = static_cast<double>(D);
            for (std::size_t t = 0; t < T; ++t) {
                const double* row = xv.data() + t * D;
                const double* gyrow = gy.data() + t * D;
                double* gxrow = gx.data() + t * D;
                const double mean = means[t], istd = inv_std[t];
                // xhat = (x - mean) * istd; y = gamma*xhat + beta
                double sum_gh = 0.0, sum_gh_xhat = 0.0;
                for (std::size_t j = 0; j < D; ++j) {
                    const double xhat = (row[j] - mean) * istd;
                    const double gh = gyrow[j] * gv[j];
                    sum_gh += gh;
                    sum_gh_xhat += gh * xhat;
                    gg[j] += gyrow[j] * xhat;
                    gb[j] += gyrow[j];
                }
                for (std::size_t j = 0; j < D; ++j) {
                    const double xhat = (row[j] - mean) * istd;
                    const double gh = gyrow[j] * gv[j];
                    gxrow[j] += istd * (gh - sum_gh / dN - xhat * sum_gh_xhat / dN);
                }
            }
        });
    }
    return y;
}

Tensor relu(Tape* tape, const Tensor& x) {
    Tensor y(x.shape());
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (tape) {
        Tensor xc = x, yc = y;
        tape->record([xc, yc]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& gx = xc.ensure_grad();
            const auto& xv = xc.values();
            for (std::size_t i = 0; i < xv.size(); ++i)
                if (xv[i] > 0.0) gx[i] += gy[i];
        });
    }
    return y;
}

Tensor avgpool2(Tape* tape, const Tensor& x) {
    require_2d(x, "avgpool2");
    const std::size_t T = x.rows(), D = x.cols();
    if (T < 1) throw DimensionError("avgpool2: empty input");
    const std::size_t To = (T + 1) / 2;
    Tensor y({To, D});
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t k = 0; k < To; ++k) {
        const std::size_t a = 2 * k;
        const std::size_t b = (a + 1 < T) ? a + 1 : a;
        for (std::size_t j = 0; j < D; ++j)
            yv[k * D + j] = 0.5 * (xv[a * D + j] + xv[b * D + j]);
    }
    if (tape) {
        Tensor xc = x, yc = y;
        tape->record([xc, yc, T, D, To]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& gx = xc.ensure_grad();
            for (std::size_t k = 0; k < To; ++k) {
                const std::size_t a = 2 * k;
                const std::size_t b = (a + 1 < T) ? a + 1 : a;
                for (std::size_t j = 0; j < D; ++j) {
                    const double g = 0.5 * gy[k * D + j];
                    gx[a * D + j] += g;
                    gx[b * D + j] += g;
                }
            }
        });
    }
    return y;
}

Tensor linear_upsample2(Tape* tape, const Tensor& x, std::size_t target_len) {
    require_2d(x, "linear_upsample2");
    const std::size_t T = x.rows(), D = x.cols();
    if (target_len < T)
        throw DimensionError("linear_upsample2: target_len must be >= input length");

    // Sample k reads input coordinate (k+0.5)*T/target_len - 0.5, edge-clamped.
    struct Samp { std::size_t i0, i1; double w1; };
    std::vector<Samp> plan(target_len);
    const double scale = static_cast<double>(T) / static_cast<double>(target_len);
    for (std::size_t k = 0; k < target_len; ++k) {
        double pos = (static_cast<double>(k) + 0.5) * scale - 0.5;
        if (pos < 0.0) pos = 0.0;
        double maxp = static_cast<double>(T - 1);
        if (pos > maxp) pos = maxp;
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const std::size_t i1 = (i0 + 1 < T) ? i0 + 1 : i0;
        plan[k] = {i0, i1, pos - static_cast<double>(i0)};
    }

    Tensor y({target_len, D});
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t k = 0; k < target_len; ++k) {
        const auto& s = plan[k];
        const double w1 = s.w1, w0 = 1.0 - s.w1;
        for (std::size_t j = 0; j < D; ++j)
            yv[k * D + j] = w0 * xv[s.i0 * D + j] + w1 * xv[s.i1 * D + j];
    }
    if (tape) {
        Tensor xc = x, yc = y;
        tape->record([xc, yc, plan, D, target_len]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& gx = xc.ensure_grad();
            for (std::size_t k = 0; k < target_len; ++k) {
                const auto& s = plan[k];
                const double w1 = s.w1, w0 = 1.0 - s.w1;
                for (std::size_t j = 0; j < D; ++j) {
                    const double g = gy[k * D + j];
                    gx[s.i0 * D + j] += w0 * g;
                    gx[s.i1 * D + j] += w1 * g;
                }
            }
        });
    }
    return y;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("add: shape mismatch");
    Tensor y(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] + bv[i];
    if (tape) {
        Tensor ac = a, bc = b, yc = y;
        tape->record([ac, bc, yc]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& ga = ac.ensure_grad();
            auto& gb = bc.ensure_grad();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
        });
    }
    return y;
}

GradCheckReport grad_check(const std::function<Tensor(Tape*)>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double tol) {
    GradCheckReport report;

    for (auto& [name, p] : params) {
        Tensor pc = p;
        pc.zero_grad();
    }
    Tape tape;
    Tensor loss = f(&tape);
    if (!std::isfinite(loss.item()))
        throw NumericError("grad_check: non-finite loss value");
    tape.backward(loss);

    for (auto& [name, p] : params) {
        Tensor pc = p;
        GradCheckEntry entry;
        entry.name = name;
        const auto& analytic = pc.ensure_grad();
        auto& vals = pc.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            const double h = 1e-5 * (1.0 + std::fabs(orig));
            vals[i] = orig + h;
            const double fp = f(nullptr).item();
            vals[i] = orig - h;
            const double fm = f(nullptr).item();
            vals[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("grad_check: non-finite perturbed loss");
            const double numeric = (fp - fm) / (2.0 * h);
            // floor keeps finite-difference roundoff from dominating near-zero grads
            const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-2});
            const double rel = std::fabs(analytic[i] - numeric) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.ok = entry.max_rel_err < tol;
        report.ok = report.ok && entry.ok;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace tadml
