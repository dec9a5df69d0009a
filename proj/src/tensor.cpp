#include "tensor.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace privit::ad {

namespace {

constexpr double k_gelu_c0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double k_gelu_c1 = 0.044715;

size_t numel_of(const std::vector<int> & shape) {
    size_t n = 1;
    for (int d : shape) {
        n *= static_cast<size_t>(d);
    }
    return n;
}

void check_same_shape(const Tensor & a, const Tensor & b, const char * op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

void check_2d(const Tensor & a, const char * op) {
    if (a.shape().size() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " +
                                    shape_str(a.shape()));
    }
}

double gelu_value(double x) {
    const double u = k_gelu_c0 * (x + k_gelu_c1 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
    const double u  = k_gelu_c0 * (x + k_gelu_c1 * x * x * x);
    const double t  = std::tanh(u);
    const double du = k_gelu_c0 * (1.0 + 3.0 * k_gelu_c1 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

std::string shape_str(const std::vector<int> & s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) {
            out += "x";
        }
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor Graph::make(std::vector<int> shape, bool requires_grad) {
    auto n           = std::make_unique<Node>();
    n->shape         = std::move(shape);
    n->value.resize(numel_of(n->shape), 0.0);
    n->requires_grad = requires_grad;
    if (requires_grad) {
        n->grad.resize(n->value.size(), 0.0);
    }
    n->graph = this;
    n->id    = static_cast<int>(tape_.size());
    tape_.push_back(std::move(n));
    return Tensor{tape_.back().get()};
}

Tensor Graph::input(std::vector<int> shape, std::vector<double> value, bool requires_grad) {
    if (numel_of(shape) != value.size()) {
        throw std::invalid_argument("input: value size " + std::to_string(value.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    Tensor t       = make(std::move(shape), requires_grad);
    t.node->value  = std::move(value);
    return t;
}

void Graph::backward(Tensor root) {
    if (!root.defined() || root.numel() != 1) {
        throw std::invalid_argument("backward: root must be a defined scalar");
    }
    if (!root.node->requires_grad) {
        return;
    }
    root.node->grad[0] = 1.0;
    for (int i = root.node->id; i >= 0; --i) {
        Node * n = tape_[static_cast<size_t>(i)].get();
        if (n->requires_grad && n->backward) {
            n->backward();
        }
    }
}

// --- helpers for building op nodes ---------------------------------------

namespace {

Tensor make_like(Tensor a, std::vector<int> shape, bool requires_grad) {
    return a.node->graph->make(std::move(shape), requires_grad);
}

}  // namespace

Tensor matmul(Tensor a, Tensor b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const int m = a.shape()[0], k = a.shape()[1];
    const int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                    " * " + shape_str(b.shape()));
    }
    const bool rg  = a.node->requires_grad || b.node->requires_grad;
    Tensor     out = make_like(a, {m, n}, rg);

    const double * av = a.node->value.data();
    const double * bv = b.node->value.data();
    double *       ov = out.node->value.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += av[i * k + p] * bv[p * n + j];
            }
            ov[i * n + j] = acc;
        }
    }
    if (rg) {
        Node * an = a.node;
        Node * bn = b.node;
        Node * on = out.node;
        out.node->backward = [an, bn, on, m, n, k] {
            const double * g = on->grad.data();
            if (an->requires_grad) {
                double * ga = an->grad.data();
                const double * bv2 = bn->value.data();
                for (int i = 0; i < m; ++i) {
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) {
                            acc += g[i * n + j] * bv2[p * n + j];
                        }
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                double * gb = bn->grad.data();
                const double * av2 = an->value.data();
                for (int p = 0; p < k; ++p) {
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i) {
                            acc += av2[i * k + p] * g[i * n + j];
                        }
                        gb[p * n + j] += acc;
                    }
                }
            }
        };
    }
    return out;
}

Tensor transpose(Tensor a) {
    check_2d(a, "transpose");
    const int m = a.shape()[0], n = a.shape()[1];
    Tensor out = make_like(a, {n, m}, a.node->requires_grad);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.node->value[static_cast<size_t>(j) * m + i] = a.node->value[static_cast<size_t>(i) * n + j];
        }
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, m, n] {
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    an->grad[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
                }
            }
        };
    }
    return out;
}

namespace {

// shared skeleton for same-shape binary elementwise ops
template <typename Fwd, typename Bwd>
Tensor binary_op(Tensor a, Tensor b, const char * name, Fwd fwd, Bwd bwd) {
    check_same_shape(a, b, name);
    const bool rg  = a.node->requires_grad || b.node->requires_grad;
    Tensor     out = make_like(a, a.shape(), rg);
    const size_t n = out.node->value.size();
    for (size_t i = 0; i < n; ++i) {
        out.node->value[i] = fwd(a.node->value[i], b.node->value[i]);
    }
    if (rg) {
        Node * an = a.node;
        Node * bn = b.node;
        Node * on = out.node;
        out.node->backward = [an, bn, on, n, bwd] {
            for (size_t i = 0; i < n; ++i) {
                bwd(on->grad[i], an, bn, i);
            }
        };
    }
    return out;
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
    return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                     [](double g, Node * an, Node * bn, size_t i) {
                         if (an->requires_grad) {
                             an->grad[i] += g;
                         }
                         if (bn->requires_grad) {
                             bn->grad[i] += g;
                         }
                     });
}

Tensor sub(Tensor a, Tensor b) {
    return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                     [](double g, Node * an, Node * bn, size_t i) {
                         if (an->requires_grad) {
                             an->grad[i] += g;
                         }
                         if (bn->requires_grad) {
                             bn->grad[i] -= g;
                         }
                     });
}

Tensor mul(Tensor a, Tensor b) {
    return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                     [](double g, Node * an, Node * bn, size_t i) {
                         if (an->requires_grad) {
                             an->grad[i] += g * bn->value[i];
                         }
                         if (bn->requires_grad) {
                             bn->grad[i] += g * an->value[i];
                         }
                     });
}

Tensor affine(Tensor a, double k, double c) {
    Tensor out = make_like(a, a.shape(), a.node->requires_grad);
    const size_t n = out.node->value.size();
    for (size_t i = 0; i < n; ++i) {
        out.node->value[i] = k * a.node->value[i] + c;
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, n, k] {
            for (size_t i = 0; i < n; ++i) {
                an->grad[i] += k * on->grad[i];
            }
        };
    }
    return out;
}

Tensor square(Tensor a) {
    Tensor out = make_like(a, a.shape(), a.node->requires_grad);
    const size_t n = out.node->value.size();
    for (size_t i = 0; i < n; ++i) {
        out.node->value[i] = a.node->value[i] * a.node->value[i];
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, n] {
            for (size_t i = 0; i < n; ++i) {
                an->grad[i] += 2.0 * an->value[i] * on->grad[i];
            }
        };
    }
    return out;
}

Tensor gelu(Tensor a) {
    Tensor out = make_like(a, a.shape(), a.node->requires_grad);
    const size_t n = out.node->value.size();
    for (size_t i = 0; i < n; ++i) {
        out.node->value[i] = gelu_value(a.node->value[i]);
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, n] {
            for (size_t i = 0; i < n; ++i) {
                an->grad[i] += gelu_derivative(an->value[i]) * on->grad[i];
            }
        };
    }
    return out;
}

Tensor softmax_rows(Tensor a) {
    const int r = a.shape().size() == 2 ? a.shape()[0] : 1;
    const int c = a.shape().size() == 2 ? a.shape()[1] : a.shape()[0];
    for (double v : a.node->value) {
        if (std::isnan(v)) {
            throw std::domain_error("softmax_rows: NaN in input");
        }
    }
    Tensor out = make_like(a, a.shape(), a.node->requires_grad);
    for (int i = 0; i < r; ++i) {
        const double * xi = a.node->value.data() + static_cast<size_t>(i) * c;
        double *       yi = out.node->value.data() + static_cast<size_t>(i) * c;
        double         mx = xi[0];
        for (int j = 1; j < c; ++j) {
            mx = std::max(mx, xi[j]);
        }
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            s += yi[j];
        }
        for (int j = 0; j < c; ++j) {
            yi[j] /= s;
        }
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, r, c] {
            for (int i = 0; i < r; ++i) {
                const double * y = on->value.data() + static_cast<size_t>(i) * c;
                const double * g = on->grad.data() + static_cast<size_t>(i) * c;
                double *       d = an->grad.data() + static_cast<size_t>(i) * c;
                double dot = 0.0;
                for (int j = 0; j < c; ++j) {
                    dot += g[j] * y[j];
                }
                for (int j = 0; j < c; ++j) {
                    d[j] += y[j] * (g[j] - dot);
                }
            }
        };
    }
    return out;
}

Tensor layernorm_rows(Tensor x, Tensor gamma, Tensor beta, double eps) {
    const int r = x.shape().size() == 2 ? x.shape()[0] : 1;
    const int c = x.shape().size() == 2 ? x.shape()[1] : x.shape()[0];
    if (gamma.numel() != c || beta.numel() != c) {
        throw std::invalid_argument("layernorm_rows: gamma/beta length must equal row width " +
                                    std::to_string(c));
    }
    const bool rg = x.node->requires_grad || gamma.node->requires_grad || beta.node->requires_grad;
    Tensor out = make_like(x, x.shape(), rg);
    // cache per-row inv std and normalized values for the backward pass
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(r));
    auto xhat    = std::make_shared<std::vector<double>>(x.node->value.size());
    for (int i = 0; i < r; ++i) {
        const double * xi = x.node->value.data() + static_cast<size_t>(i) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) {
            mean += xi[j];
        }
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            var += (xi[j] - mean) * (xi[j] - mean);
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < c; ++j) {
            const double h = (xi[j] - mean) * inv;
            (*xhat)[static_cast<size_t>(i) * c + j] = h;
            out.node->value[static_cast<size_t>(i) * c + j] = h * gamma.node->value[static_cast<size_t>(j)] +
                                                              beta.node->value[static_cast<size_t>(j)];
        }
    }
    if (rg) {
        Node * xn = x.node;
        Node * gn = gamma.node;
        Node * bn = beta.node;
        Node * on = out.node;
        out.node->backward = [xn, gn, bn, on, r, c, inv_std, xhat] {
            for (int i = 0; i < r; ++i) {
                const double * g = on->grad.data() + static_cast<size_t>(i) * c;
                const double * h = xhat->data() + static_cast<size_t>(i) * c;
                if (gn->requires_grad) {
                    for (int j = 0; j < c; ++j) {
                        gn->grad[static_cast<size_t>(j)] += g[j] * h[j];
                    }
                }
                if (bn->requires_grad) {
                    for (int j = 0; j < c; ++j) {
                        bn->grad[static_cast<size_t>(j)] += g[j];
                    }
                }
                if (xn->requires_grad) {
                    // dxhat = g * gamma; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < c; ++j) {
                        const double dh = g[j] * gn->value[static_cast<size_t>(j)];
                        m1 += dh;
                        m2 += dh * h[j];
                    }
                    m1 /= c;
                    m2 /= c;
                    const double inv = (*inv_std)[static_cast<size_t>(i)];
                    for (int j = 0; j < c; ++j) {
                        const double dh = g[j] * gn->value[static_cast<size_t>(j)];
                        xn->grad[static_cast<size_t>(i) * c + j] += inv * (dh - m1 - h[j] * m2);
                    }
                }
            }
        };
    }
    return out;
}

Tensor cross_entropy(Tensor logits, const std::vector<int> & labels) {
    check_2d(logits, "cross_entropy");
    const int b = logits.shape()[0];
    const int c = logits.shape()[1];
    if (static_cast<int>(labels.size()) != b) {
        throw std::invalid_argument("cross_entropy: batch size " + std::to_string(b) + " vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    for (int lbl : labels) {
        if (lbl < 0 || lbl >= c) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(lbl) +
                                    " outside [0," + std::to_string(c) + ")");
        }
    }
    Tensor out = make_like(logits, {1}, logits.node->requires_grad);
    // keep the per-row softmax around for the backward pass
    auto probs = std::make_shared<std::vector<double>>(logits.node->value.size());
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        const double * z = logits.node->value.data() + static_cast<size_t>(i) * c;
        double mx = z[0];
        for (int j = 1; j < c; ++j) {
            mx = std::max(mx, z[j]);
        }
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(z[j] - mx);
            (*probs)[static_cast<size_t>(i) * c + j] = e;
            s += e;
        }
        for (int j = 0; j < c; ++j) {
            (*probs)[static_cast<size_t>(i) * c + j] /= s;
        }
        total += mx + std::log(s) - z[labels[static_cast<size_t>(i)]];
    }
    out.node->value[0] = total / b;
    if (out.node->requires_grad) {
        Node * ln = logits.node;
        Node * on = out.node;
        auto   lbls = labels;
        out.node->backward = [ln, on, probs, lbls, b, c] {
            const double g = on->grad[0] / b;
            for (int i = 0; i < b; ++i) {
                for (int j = 0; j < c; ++j) {
                    double p = (*probs)[static_cast<size_t>(i) * c + j];
                    if (j == lbls[static_cast<size_t>(i)]) {
                        p -= 1.0;
                    }
                    ln->grad[static_cast<size_t>(i) * c + j] += g * p;
                }
            }
        };
    }
    return out;
}

Tensor kd_div(Tensor student_logits, const std::vector<double> & teacher_logits, double temperature) {
    check_2d(student_logits, "kd_div");
    const int b = student_logits.shape()[0];
    const int c = student_logits.shape()[1];
    if (teacher_logits.size() != student_logits.node->value.size()) {
        throw std::invalid_argument("kd_div: teacher logits size mismatch");
    }
    const double t = temperature;
    auto softmax_row = [c](const double * z, double scale, double * out_row) {
        double mx = z[0] * scale;
        for (int j = 1; j < c; ++j) {
            mx = std::max(mx, z[j] * scale);
        }
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            out_row[j] = std::exp(z[j] * scale - mx);
            s += out_row[j];
        }
        for (int j = 0; j < c; ++j) {
            out_row[j] /= s;
        }
    };

    Tensor out = make_like(student_logits, {1}, student_logits.node->requires_grad);
    auto ps = std::make_shared<std::vector<double>>(student_logits.node->value.size());
    auto pt = std::make_shared<std::vector<double>>(student_logits.node->value.size());
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        softmax_row(student_logits.node->value.data() + static_cast<size_t>(i) * c, 1.0 / t,
                    ps->data() + static_cast<size_t>(i) * c);
        softmax_row(teacher_logits.data() + static_cast<size_t>(i) * c, 1.0 / t,
                    pt->data() + static_cast<size_t>(i) * c);
        for (int j = 0; j < c; ++j) {
            const double p = (*pt)[static_cast<size_t>(i) * c + j];
            const double q = (*ps)[static_cast<size_t>(i) * c + j];
            if (p > 0.0) {
                total += p * (std::log(p) - std::log(q));
            }
        }
    }
    out.node->value[0] = t * t * total / b;
    if (out.node->requires_grad) {
        Node * sn = student_logits.node;
        Node * on = out.node;
        out.node->backward = [sn, on, ps, pt, b, c, t] {
            // d/ds_j of T^2*KL is T*(ps_j - pt_j); batch mean adds 1/b
            const double g = on->grad[0] * t / b;
            for (size_t i = 0; i < ps->size(); ++i) {
                sn->grad[i] += g * ((*ps)[i] - (*pt)[i]);
            }
        };
    }
    return out;
}

Tensor sum(Tensor a) {
    Tensor out = make_like(a, {1}, a.node->requires_grad);
    double s = 0.0;
    for (double v : a.node->value) {
        s += v;
    }
    out.node->value[0] = s;
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on] {
            for (double & g : an->grad) {
                g += on->grad[0];
            }
        };
    }
    return out;
}

Tensor abs_sum(Tensor a) {
    Tensor out = make_like(a, {1}, a.node->requires_grad);
    double s = 0.0;
    for (double v : a.node->value) {
        s += std::fabs(v);
    }
    out.node->value[0] = s;
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on] {
            // subgradient 0 at exactly 0
            for (size_t i = 0; i < an->grad.size(); ++i) {
                const double v = an->value[i];
                an->grad[i] += on->grad[0] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
            }
        };
    }
    return out;
}

Tensor slice(Tensor a, int offset, int len) {
    if (offset < 0 || len < 0 || offset + len > a.numel()) {
        throw std::invalid_argument("slice: [" + std::to_string(offset) + "," +
                                    std::to_string(offset + len) + ") outside " +
                                    std::to_string(a.numel()) + " elements");
    }
    Tensor out = make_like(a, {len}, a.node->requires_grad);
    for (int i = 0; i < len; ++i) {
        out.node->value[static_cast<size_t>(i)] = a.node->value[static_cast<size_t>(offset + i)];
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, offset, len] {
            for (int i = 0; i < len; ++i) {
                an->grad[static_cast<size_t>(offset + i)] += on->grad[static_cast<size_t>(i)];
            }
        };
    }
    return out;
}

Tensor rows(Tensor a, int r0, int r1) {
    check_2d(a, "rows");
    const int n = a.shape()[1];
    if (r0 < 0 || r1 > a.shape()[0] || r0 >= r1) {
        throw std::invalid_argument("rows: bad range [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") for " + shape_str(a.shape()));
    }
    Tensor out = slice(a, r0 * n, (r1 - r0) * n);
    out.node->shape = {r1 - r0, n};
    return out;
}

Tensor cols(Tensor a, int c0, int c1) {
    check_2d(a, "cols");
    const int m = a.shape()[0], n = a.shape()[1];
    if (c0 < 0 || c1 > n || c0 >= c1) {
        throw std::invalid_argument("cols: bad range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for " + shape_str(a.shape()));
    }
    const int w = c1 - c0;
    Tensor out = make_like(a, {m, w}, a.node->requires_grad);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) {
            out.node->value[static_cast<size_t>(i) * w + j] = a.node->value[static_cast<size_t>(i) * n + c0 + j];
        }
    }
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on, m, n, w, c0] {
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < w; ++j) {
                    an->grad[static_cast<size_t>(i) * n + c0 + j] += on->grad[static_cast<size_t>(i) * w + j];
                }
            }
        };
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor> & parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: empty input");
    }
    const int n = parts[0].cols();
    int m = 0;
    bool rg = false;
    for (const Tensor & p : parts) {
        if (p.cols() != n) {
            throw std::invalid_argument("concat_rows: column mismatch");
        }
        m += p.rows();
        rg = rg || p.node->requires_grad;
    }
    Tensor out = parts[0].node->graph->make({m, n}, rg);
    size_t at = 0;
    for (const Tensor & p : parts) {
        for (double v : p.node->value) {
            out.node->value[at++] = v;
        }
    }
    if (rg) {
        auto   nodes = std::make_shared<std::vector<Node *>>();
        for (const Tensor & p : parts) {
            nodes->push_back(p.node);
        }
        Node * on = out.node;
        out.node->backward = [nodes, on] {
            size_t at2 = 0;
            for (Node * p : *nodes) {
                if (p->requires_grad) {
                    for (size_t i = 0; i < p->value.size(); ++i) {
                        p->grad[i] += on->grad[at2 + i];
                    }
                }
                at2 += p->value.size();
            }
        };
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor> & parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: empty input");
    }
    const int m = parts[0].rows();
    int n = 0;
    bool rg = false;
    for (const Tensor & p : parts) {
        if (p.rows() != m) {
            throw std::invalid_argument("concat_cols: row mismatch");
        }
        n += p.cols();
        rg = rg || p.node->requires_grad;
    }
    Tensor out = parts[0].node->graph->make({m, n}, rg);
    int col0 = 0;
    for (const Tensor & p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) {
                out.node->value[static_cast<size_t>(i) * n + col0 + j] = p.node->value[static_cast<size_t>(i) * w + j];
            }
        }
        col0 += w;
    }
    if (rg) {
        auto nodes = std::make_shared<std::vector<Node *>>();
        for (const Tensor & p : parts) {
            nodes->push_back(p.node);
        }
        Node * on = out.node;
        out.node->backward = [nodes, on, m, n] {
            int c0 = 0;
            for (Node * p : *nodes) {
                const int w = p->shape.size() == 2 ? p->shape[1] : 1;
                if (p->requires_grad) {
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < w; ++j) {
                            p->grad[static_cast<size_t>(i) * w + j] += on->grad[static_cast<size_t>(i) * n + c0 + j];
                        }
                    }
                }
                c0 += w;
            }
        };
    }
    return out;
}

Tensor repeat_cols(Tensor v, int n) {
    if (v.shape().size() != 1) {
        throw std::invalid_argument("repeat_cols: expected 1-D tensor, got " + shape_str(v.shape()));
    }
    const int m = v.shape()[0];
    Tensor out = make_like(v, {m, n}, v.node->requires_grad);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.node->value[static_cast<size_t>(i) * n + j] = v.node->value[static_cast<size_t>(i)];
        }
    }
    if (out.node->requires_grad) {
        Node * vn = v.node;
        Node * on = out.node;
        out.node->backward = [vn, on, m, n] {
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) {
                    acc += on->grad[static_cast<size_t>(i) * n + j];
                }
                vn->grad[static_cast<size_t>(i)] += acc;
            }
        };
    }
    return out;
}

Tensor reshape(Tensor a, std::vector<int> shape) {
    if (numel_of(shape) != a.node->value.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    }
    Tensor out = make_like(a, std::move(shape), a.node->requires_grad);
    out.node->value = a.node->value;
    if (out.node->requires_grad) {
        Node * an = a.node;
        Node * on = out.node;
        out.node->backward = [an, on] {
            for (size_t i = 0; i < an->grad.size(); ++i) {
                an->grad[i] += on->grad[i];
            }
        };
    }
    return out;
}

double grad_check(const ScalarFn & f, const std::vector<int> & shape, const std::vector<double> & x0,
                  double step) {
    std::vector<double> analytic;
    {
        Graph  g;
        Tensor x = g.input(shape, x0, true);
        Tensor y = f(g, x);
        if (y.numel() != 1) {
            throw std::invalid_argument("grad_check: f must be scalar-valued");
        }
        g.backward(y);
        analytic = x.node->grad;
    }
    auto eval = [&](const std::vector<double> & xv) {
        Graph  g;
        Tensor x = g.input(shape, xv, false);
        Tensor y = f(g, x);
        if (y.numel() != 1) {
            throw std::invalid_argument("grad_check: f must be scalar-valued");
        }
        return y.scalar();
    };
    double max_err = 0.0;
    std::vector<double> xv = x0;
    for (size_t i = 0; i < xv.size(); ++i) {
        const double keep = xv[i];
        xv[i] = keep + step;
        const double fp = eval(xv);
        xv[i] = keep - step;
        const double fm = eval(xv);
        xv[i] = keep;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom   = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        max_err = std::max(max_err, std::fabs(analytic[i] - numeric) / denom);
    }
    return max_err;
}

}  // namespace privit::ad
