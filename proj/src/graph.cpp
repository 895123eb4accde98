#include "vidmem/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vidmem {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a.shape) + " vs " +
                                Tensor::shape_str(b.shape));
}
}  // namespace

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Graph::Node* Graph::make(Tensor value) {
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.grad = Tensor::zeros(n.value.shape);
    return &n;
}

NodeRef Graph::leaf(Tensor value) { return make(std::move(value)); }

NodeRef Graph::param(Param& p) {
    Node* n = make(p.value);
    n->param = &p;
    return n;
}

NodeRef Graph::matmul(Node* a, Node* b) {
    const std::size_t m = a->value.rows(), k = a->value.cols();
    const std::size_t k2 = b->value.rows(), n = b->value.cols();
    if (k != k2) shape_error("matmul", a->value, b->value);
    Tensor out({m, n});
    const double* A = a->value.data.data();
    const double* B = b->value.data.data();
    double* C = out.data.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* Bp = B + p * n;
            double* Ci = C + i * n;
            for (std::size_t j = 0; j < n; ++j) Ci[j] += av * Bp[j];
        }
    Node* o = make(std::move(out));
    o->back = [a, b, m, k, n](Node& self) {
        const double* dC = self.grad.data.data();
        const double* A = a->value.data.data();
        const double* B = b->value.data.data();
        double* dA = a->grad.data.data();
        double* dB = b->grad.data.data();
        // dA = dC · Bᵀ
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                const double* dCi = dC + i * n;
                const double* Bp = B + p * n;
                for (std::size_t j = 0; j < n; ++j) acc += dCi[j] * Bp[j];
                dA[i * k + p] += acc;
            }
        // dB = Aᵀ · dC
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = A[i * k + p];
                if (av == 0.0) continue;
                const double* dCi = dC + i * n;
                double* dBp = dB + p * n;
                for (std::size_t j = 0; j < n; ++j) dBp[j] += av * dCi[j];
            }
    };
    return o;
}

NodeRef Graph::matmul_nt(Node* a, Node* b) {
    const std::size_t m = a->value.rows(), k = a->value.cols();
    const std::size_t n = b->value.rows(), k2 = b->value.cols();
    if (k != k2) shape_error("matmul_nt", a->value, b->value);
    Tensor out({m, n});
    const double* A = a->value.data.data();
    const double* B = b->value.data.data();
    double* C = out.data.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            const double* Ai = A + i * k;
            const double* Bj = B + j * k;
            for (std::size_t p = 0; p < k; ++p) acc += Ai[p] * Bj[p];
            C[i * n + j] = acc;
        }
    Node* o = make(std::move(out));
    o->back = [a, b, m, k, n](Node& self) {
        const double* dC = self.grad.data.data();
        const double* A = a->value.data.data();
        const double* B = b->value.data.data();
        double* dA = a->grad.data.data();
        double* dB = b->grad.data.data();
        // dA = dC · B ; dB = dCᵀ · A
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double g = dC[i * n + j];
                if (g == 0.0) continue;
                const double* Bj = B + j * k;
                const double* Ai = A + i * k;
                double* dAi = dA + i * k;
                double* dBj = dB + j * k;
                for (std::size_t p = 0; p < k; ++p) {
                    dAi[p] += g * Bj[p];
                    dBj[p] += g * Ai[p];
                }
            }
    };
    return o;
}

NodeRef Graph::add(Node* a, Node* b) {
    if (!a->value.same_shape(b->value)) shape_error("add", a->value, b->value);
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
    Node* o = make(std::move(out));
    o->back = [a, b](Node& self) {
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            a->grad.data[i] += self.grad.data[i];
            b->grad.data[i] += self.grad.data[i];
        }
    };
    return o;
}

NodeRef Graph::add_row_broadcast(Node* x, Node* row) {
    const std::size_t r = x->value.rows(), c = x->value.cols();
    if (row->value.numel() != c) shape_error("add_row_broadcast", x->value, row->value);
    Tensor out = x->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += row->value.data[j];
    Node* o = make(std::move(out));
    o->back = [x, row, r, c](Node& self) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                x->grad.data[i * c + j] += self.grad.data[i * c + j];
                row->grad.data[j] += self.grad.data[i * c + j];
            }
    };
    return o;
}

NodeRef Graph::scale(Node* x, double cst) {
    Tensor out = x->value;
    for (double& v : out.data) v *= cst;
    Node* o = make(std::move(out));
    o->back = [x, cst](Node& self) {
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            x->grad.data[i] += cst * self.grad.data[i];
    };
    return o;
}

NodeRef Graph::mul(Node* a, Node* b) {
    if (!a->value.same_shape(b->value)) shape_error("mul", a->value, b->value);
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
    Node* o = make(std::move(out));
    o->back = [a, b](Node& self) {
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            a->grad.data[i] += self.grad.data[i] * b->value.data[i];
            b->grad.data[i] += self.grad.data[i] * a->value.data[i];
        }
    };
    return o;
}

NodeRef Graph::gelu(Node* x) {
    Tensor out = x->value;
    for (double& v : out.data) {
        const double u = kGeluC * (v + kGeluA * v * v * v);
        v = 0.5 * v * (1.0 + std::tanh(u));
    }
    Node* o = make(std::move(out));
    o->back = [x](Node& self) {
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            const double v = x->value.data[i];
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
            x->grad.data[i] += self.grad.data[i] * d;
        }
    };
    return o;
}

NodeRef Graph::softmax_rows(Node* x) {
    const std::size_t r = x->value.rows(), c = x->value.cols();
    Tensor out = x->value;
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
    }
    Node* o = make(std::move(out));
    o->back = [x, r, c](Node& self) {
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = self.value.data.data() + i * c;
            const double* dy = self.grad.data.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
            for (std::size_t j = 0; j < c; ++j)
                x->grad.data[i * c + j] += y[j] * (dy[j] - dot);
        }
    };
    return o;
}

NodeRef Graph::layer_norm(Node* x, Node* gain, Node* bias, double eps) {
    const std::size_t r = x->value.rows(), c = x->value.cols();
    if (gain->value.numel() != c || bias->value.numel() != c)
        shape_error("layer_norm", x->value, gain->value);
    Tensor out = x->value;
    Tensor norm({r, c});  // pre-affine standardized values, kept for backward
    std::vector<double> inv_sigma(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* xi = x->value.data.data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xi[j];
        mean /= double(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= double(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double nj = (xi[j] - mean) * is;
            norm.data[i * c + j] = nj;
            out.data[i * c + j] = nj * gain->value.data[j] + bias->value.data[j];
        }
    }
    Node* o = make(std::move(out));
    o->back = [x, gain, bias, r, c, norm = std::move(norm),
               inv_sigma = std::move(inv_sigma)](Node& self) {
        for (std::size_t i = 0; i < r; ++i) {
            const double* dout = self.grad.data.data() + i * c;
            const double* nrm = norm.data.data() + i * c;
            double mean_dy = 0.0, mean_dyn = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const double dy = dout[j] * gain->value.data[j];
                mean_dy += dy;
                mean_dyn += dy * nrm[j];
                gain->grad.data[j] += dout[j] * nrm[j];
                bias->grad.data[j] += dout[j];
            }
            mean_dy /= double(c);
            mean_dyn /= double(c);
            for (std::size_t j = 0; j < c; ++j) {
                const double dy = dout[j] * gain->value.data[j];
                x->grad.data[i * c + j] +=
                    inv_sigma[i] * (dy - mean_dy - nrm[j] * mean_dyn);
            }
        }
    };
    return o;
}

NodeRef Graph::slice_rows(Node* x, std::size_t start, std::size_t count) {
    const std::size_t c = x->value.cols();
    if (start + count > x->value.rows())
        throw std::out_of_range("slice_rows: range exceeds tensor rows");
    Tensor out({count, c});
    std::copy_n(x->value.data.begin() + start * c, count * c, out.data.begin());
    Node* o = make(std::move(out));
    o->back = [x, start, count, c](Node& self) {
        for (std::size_t i = 0; i < count * c; ++i)
            x->grad.data[start * c + i] += self.grad.data[i];
    };
    return o;
}

NodeRef Graph::concat_rows(const std::vector<Node*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const std::size_t c = parts[0]->value.cols();
    std::size_t r = 0;
    for (Node* p : parts) {
        if (p->value.cols() != c) shape_error("concat_rows", parts[0]->value, p->value);
        r += p->value.rows();
    }
    Tensor out({r, c});
    std::size_t off = 0;
    for (Node* p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
        off += p->value.numel();
    }
    Node* o = make(std::move(out));
    o->back = [parts](Node& self) {
        std::size_t off = 0;
        for (Node* p : parts) {
            for (std::size_t i = 0; i < p->grad.numel(); ++i)
                p->grad.data[i] += self.grad.data[off + i];
            off += p->grad.numel();
        }
    };
    return o;
}

NodeRef Graph::slice_cols(Node* x, std::size_t start, std::size_t count) {
    const std::size_t r = x->value.rows(), c = x->value.cols();
    if (start + count > c) throw std::out_of_range("slice_cols: range exceeds tensor cols");
    Tensor out({r, count});
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(x->value.data.begin() + i * c + start, count,
                    out.data.begin() + i * count);
    Node* o = make(std::move(out));
    o->back = [x, start, count, r, c](Node& self) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < count; ++j)
                x->grad.data[i * c + start + j] += self.grad.data[i * count + j];
    };
    return o;
}

NodeRef Graph::concat_cols(const std::vector<Node*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const std::size_t r = parts[0]->value.rows();
    std::size_t c = 0;
    for (Node* p : parts) {
        if (p->value.rows() != r) shape_error("concat_cols", parts[0]->value, p->value);
        c += p->value.cols();
    }
    Tensor out({r, c});
    std::size_t off = 0;
    for (Node* p : parts) {
        const std::size_t pc = p->value.cols();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(p->value.data.begin() + i * pc, pc,
                        out.data.begin() + i * c + off);
        off += pc;
    }
    Node* o = make(std::move(out));
    o->back = [parts, r, c](Node& self) {
        std::size_t off = 0;
        for (Node* p : parts) {
            const std::size_t pc = p->grad.cols();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < pc; ++j)
                    p->grad.data[i * pc + j] += self.grad.data[i * c + off + j];
            off += pc;
        }
    };
    return o;
}

NodeRef Graph::gather_rows(Node* table, const std::vector<std::size_t>& ids) {
    const std::size_t c = table->value.cols();
    const std::size_t vocab = table->value.rows();
    for (std::size_t id : ids)
        if (id >= vocab)
            throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                                    " out of range (rows=" + std::to_string(vocab) + ")");
    Tensor out({ids.size(), c});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table->value.data.begin() + ids[i] * c, c, out.data.begin() + i * c);
    Node* o = make(std::move(out));
    o->back = [table, ids, c](Node& self) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < c; ++j)
                table->grad.data[ids[i] * c + j] += self.grad.data[i * c + j];
    };
    return o;
}

NodeRef Graph::sum(Node* x) {
    double s = 0.0;
    for (double v : x->value.data) s += v;
    Node* o = make(Tensor({1}, {s}));
    o->back = [x](Node& self) {
        for (double& g : x->grad.data) g += self.grad.data[0];
    };
    return o;
}

NodeRef Graph::cross_entropy_rows(Node* logits, const std::vector<std::size_t>& rows,
                                  const std::vector<std::size_t>& targets) {
    if (rows.size() != targets.size() || rows.empty())
        throw std::invalid_argument("cross_entropy_rows: rows/targets mismatch or empty");
    const std::size_t c = logits->value.cols();
    const std::size_t nr = logits->value.rows();
    // softmax per selected row, cached for backward
    Tensor probs({rows.size(), c});
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= nr) throw std::out_of_range("cross_entropy_rows: row index");
        if (targets[i] >= c) throw std::out_of_range("cross_entropy_rows: target id");
        const double* l = logits->value.data.data() + rows[i] * c;
        double mx = l[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, l[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(l[j] - mx);
        const double logz = mx + std::log(sum);
        loss += logz - l[targets[i]];
        for (std::size_t j = 0; j < c; ++j)
            probs.data[i * c + j] = std::exp(l[j] - logz);
    }
    loss /= double(rows.size());
    Node* o = make(Tensor({1}, {loss}));
    o->back = [logits, rows, targets, c, probs = std::move(probs)](Node& self) {
        const double g = self.grad.data[0] / double(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double* dl = logits->grad.data.data() + rows[i] * c;
            const double* p = probs.data.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) dl[j] += g * p[j];
            dl[targets[i]] -= g;
        }
    };
    return o;
}

void Graph::backward(Node* root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    root->grad.data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if (it->back) it->back(*it);
    for (Node& n : nodes_)
        if (n.param)
            for (std::size_t i = 0; i < n.grad.numel(); ++i)
                n.param->grad.data[i] += n.grad.data[i];
}

}  // namespace vidmem
