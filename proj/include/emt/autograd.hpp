#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "emt/tensor.hpp"

namespace emt {

// Primitive set: everything the ST/MT networks and their training losses
// need, nothing more. kLeaf marks inputs/parameters and is not applicable.
enum class Prim {
    kLeaf,
    kLinear,
    kRelu,
    kSigmoid,
    kConcat,
    kEmbeddingLookup,
    kConv1d,
    kMaxPool1d,
    kGlobalAvgPool,
    kTemporalMaxPool,
    kAdd,
    kMul,
    kReduceMean,
    kReduceSum,
    kAbs,
    kWeightedBce,
};

inline const char* to_string(Prim p) {
    switch (p) {
        case Prim::kLeaf: return "leaf";
        case Prim::kLinear: return "linear";
        case Prim::kRelu: return "relu";
        case Prim::kSigmoid: return "sigmoid";
        case Prim::kConcat: return "concat";
        case Prim::kEmbeddingLookup: return "embedding-lookup";
        case Prim::kConv1d: return "conv1d";
        case Prim::kMaxPool1d: return "maxpool1d";
        case Prim::kGlobalAvgPool: return "global-average-pool";
        case Prim::kTemporalMaxPool: return "temporal-max-pool";
        case Prim::kAdd: return "add";
        case Prim::kMul: return "mul";
        case Prim::kReduceMean: return "reduce-mean";
        case Prim::kReduceSum: return "reduce-sum";
        case Prim::kAbs: return "abs";
        case Prim::kWeightedBce: return "weighted-bce";
    }
    return "unknown";
}

inline Prim prim_from_string(const std::string& id) {
    static const std::vector<Prim> all = {
        Prim::kLinear,        Prim::kRelu,      Prim::kSigmoid,         Prim::kConcat,
        Prim::kEmbeddingLookup, Prim::kConv1d,  Prim::kMaxPool1d,       Prim::kGlobalAvgPool,
        Prim::kTemporalMaxPool, Prim::kAdd,     Prim::kMul,             Prim::kReduceMean,
        Prim::kReduceSum,     Prim::kAbs,       Prim::kWeightedBce};
    for (Prim p : all)
        if (id == to_string(p)) return p;
    throw std::invalid_argument("unknown primitive id: " + id);
}

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Per-primitive attributes. Only the fields a primitive documents are read.
struct PrimAttrs {
    int stride = 1;    // conv1d, maxpool1d (0 on maxpool1d means = width)
    int padding = 0;   // conv1d, zeros on both sides
    int width = 0;     // maxpool1d window

    std::vector<int> ids;            // embedding-lookup token ids, row-major
    std::vector<size_t> ids_shape;   // embedding-lookup output prefix shape

    std::vector<uint8_t> labels;     // weighted-bce: binary labels
    std::vector<uint8_t> mask;       // weighted-bce: label presence
    double w_pos = 1.0;              // weighted-bce class weights
    double w_neg = 1.0;
};

class TapeNode;
using NodePtr = std::shared_ptr<TapeNode>;

// One node of the define-by-run tape. The graph is rebuilt per forward pass;
// nodes are kept alive by the shared_ptr chain hanging off the loss.
class TapeNode {
public:
    Prim op_kind = Prim::kLeaf;
    std::vector<NodePtr> inputs;
    Tensor value;
    std::optional<Tensor> grad;
    std::function<void(TapeNode&)> backward_fn;

    static NodePtr leaf(Tensor v) {
        auto n = std::make_shared<TapeNode>();
        n->value = std::move(v);
        return n;
    }
};

namespace detail {

inline void ensure_grad(TapeNode& n) {
    if (!n.grad) n.grad = Tensor::zeros(n.value.shape());
}

inline void add_into(Tensor& dst, const std::vector<double>& src) {
    double* d = dst.mut_data();
    for (size_t i = 0; i < src.size(); ++i) d[i] += src[i];
}

[[noreturn]] inline void shape_fail(Prim p, const std::string& detail) {
    throw ShapeError(std::string(to_string(p)) + ": " + detail);
}

inline void require_inputs(Prim p, const std::vector<NodePtr>& in, size_t n) {
    if (in.size() != n)
        shape_fail(p, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    for (const auto& node : in)
        if (!node) shape_fail(p, "null input node");
}

}  // namespace detail

// Applies one primitive, registering the result on the tape. The returned
// node's value is the 64-bit arithmetic result; its backward_fn routes
// d(loss)/d(output) into the inputs' grads.
inline NodePtr apply_primitive(Prim kind, const std::vector<NodePtr>& inputs,
                               const PrimAttrs& attrs = {}) {
    using detail::ensure_grad;
    using detail::require_inputs;
    using detail::shape_fail;

    auto out = std::make_shared<TapeNode>();
    out->op_kind = kind;
    out->inputs = inputs;

    switch (kind) {
        case Prim::kLinear: {
            require_inputs(kind, inputs, 3);
            const Tensor& x = inputs[0]->value;
            const Tensor& w = inputs[1]->value;
            const Tensor& b = inputs[2]->value;
            if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
                shape_fail(kind, "want x[B,Din], W[Din,Dout], b[Dout]; got " + x.shape_str() +
                                     ", " + w.shape_str() + ", " + b.shape_str());
            size_t batch = x.dim(0), din = x.dim(1), dout = w.dim(1);
            if (w.dim(0) != din)
                shape_fail(kind, "input dim " + std::to_string(din) + " != weight rows " +
                                     std::to_string(w.dim(0)));
            if (b.dim(0) != dout)
                shape_fail(kind, "bias dim " + std::to_string(b.dim(0)) + " != weight cols " +
                                     std::to_string(dout));
            std::vector<double> y(batch * dout);
            for (size_t i = 0; i < batch; ++i)
                for (size_t j = 0; j < dout; ++j) y[i * dout + j] = b[j];
            detail::matmul_nn(y.data(), x.data().data(), w.data().data(), batch, din, dout);
            out->value = Tensor({batch, dout}, std::move(y));
            out->backward_fn = [batch, din, dout](TapeNode& self) {
                const Tensor& gy = *self.grad;
                const Tensor& xv = self.inputs[0]->value;
                const Tensor& wv = self.inputs[1]->value;
                ensure_grad(*self.inputs[0]);
                ensure_grad(*self.inputs[1]);
                ensure_grad(*self.inputs[2]);
                detail::matmul_nt(self.inputs[0]->grad->mut_data(), gy.data().data(),
                                  wv.data().data(), batch, dout, din);
                detail::matmul_tn(self.inputs[1]->grad->mut_data(), xv.data().data(),
                                  gy.data().data(), batch, din, dout);
                double* gb = self.inputs[2]->grad->mut_data();
                for (size_t i = 0; i < batch; ++i)
                    for (size_t j = 0; j < dout; ++j) gb[j] += gy[i * dout + j];
            };
            break;
        }

        case Prim::kRelu: {
            require_inputs(kind, inputs, 1);
            const Tensor& x = inputs[0]->value;
            std::vector<double> y(x.size());
            for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            out->value = Tensor(x.shape(), std::move(y));
            out->backward_fn = [](TapeNode& self) {
                const Tensor& gy = *self.grad;
                const Tensor& xv = self.inputs[0]->value;
                ensure_grad(*self.inputs[0]);
                double* gx = self.inputs[0]->grad->mut_data();
                // subgradient at the kink is 0
                for (size_t i = 0; i < xv.size(); ++i)
                    if (xv[i] > 0.0) gx[i] += gy[i];
            };
            break;
        }

        case Prim::kSigmoid: {
            require_inputs(kind, inputs, 1);
            const Tensor& x = inputs[0]->value;
            std::vector<double> y(x.size());
            for (size_t i = 0; i < x.size(); ++i) {
                double v = x[i];
                y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                : std::exp(v) / (1.0 + std::exp(v));
            }
            out->value = Tensor(x.shape(), std::move(y));
            out->backward_fn = [](TapeNode& self) {
                const Tensor& gy = *self.grad;
                const Tensor& sv = self.value;
                ensure_grad(*self.inputs[0]);
                double* gx = self.inputs[0]->grad->mut_data();
                for (size_t i = 0; i < sv.size(); ++i) gx[i] += gy[i] * sv[i] * (1.0 - sv[i]);
            };
            break;
        }

        case Prim::kConcat: {
            if (inputs.empty()) shape_fail(kind, "needs at least one input");
            for (const auto& node : inputs)
                if (!node) shape_fail(kind, "null input node");
            const Tensor& first = inputs[0]->value;
            size_t nd = first.ndim();
            if (nd == 0) shape_fail(kind, "scalar inputs not supported");
            size_t last = 0;
            for (const auto& node : inputs) {
                const Tensor& t = node->value;
                if (t.ndim() != nd)
                    shape_fail(kind, "rank mismatch: " + first.shape_str() + " vs " + t.shape_str());
                for (size_t d = 0; d + 1 < nd; ++d)
                    if (t.dim(d) != first.dim(d))
                        shape_fail(kind, "dim " + std::to_string(d) + " mismatch: " +
                                             first.shape_str() + " vs " + t.shape_str());
                last += t.dim(nd - 1);
            }
            std::vector<size_t> oshape(first.shape());
            oshape[nd - 1] = last;
            size_t rows = 1;
            for (size_t d = 0; d + 1 < nd; ++d) rows *= first.dim(d);
            std::vector<double> y(rows * last);
            std::vector<size_t> widths;
            widths.reserve(inputs.size());
            for (const auto& node : inputs) widths.push_back(node->value.dim(nd - 1));
            for (size_t r = 0; r < rows; ++r) {
                size_t off = 0;
                for (size_t k = 0; k < inputs.size(); ++k) {
                    const Tensor& t = inputs[k]->value;
                    size_t w = widths[k];
                    for (size_t j = 0; j < w; ++j) y[r * last + off + j] = t[r * w + j];
                    off += w;
                }
            }
            out->value = Tensor(std::move(oshape), std::move(y));
            out->backward_fn = [rows, last, widths](TapeNode& self) {
                const Tensor& gy = *self.grad;
                size_t off = 0;
                for (size_t k = 0; k < self.inputs.size(); ++k) {
                    TapeNode& in = *self.inputs[k];
                    ensure_grad(in);
                    double* gx = in.grad->mut_data();
                    size_t w = widths[k];
                    for (size_t r = 0; r < rows; ++r)
                        for (size_t j = 0; j < w; ++j) gx[r * w + j] += gy[r * last + off + j];
                    off += w;
                }
            };
            break;
        }

        case Prim::kEmbeddingLookup: {
            require_inputs(kind, inputs, 1);
            const Tensor& table = inputs[0]->value;
            if (table.ndim() != 2) shape_fail(kind, "table must be [V,d]; got " + table.shape_str());
            size_t vsize = table.dim(0), dim = table.dim(1);
            size_t n = 1;
            for (size_t d : attrs.ids_shape) n *= d;
            if (attrs.ids_shape.empty() || n != attrs.ids.size())
                shape_fail(kind, "ids_shape does not match ids length");
            for (int id : attrs.ids)
                if (id < 0 || static_cast<size_t>(id) >= vsize)
                    shape_fail(kind, "token id " + std::to_string(id) + " outside table of size " +
                                         std::to_string(vsize));
            std::vector<size_t> oshape(attrs.ids_shape);
            oshape.push_back(dim);
            std::vector<double> y(n * dim);
            const double* tb = table.data().data();
            for (size_t i = 0; i < n; ++i) {
                const double* row = tb + static_cast<size_t>(attrs.ids[i]) * dim;
                std::copy(row, row + dim, y.begin() + static_cast<std::ptrdiff_t>(i * dim));
            }
            out->value = Tensor(std::move(oshape), std::move(y));
            std::vector<int> ids = attrs.ids;
            out->backward_fn = [ids, dim](TapeNode& self) {
                const Tensor& gy = *self.grad;
                ensure_grad(*self.inputs[0]);
                double* gt = self.inputs[0]->grad->mut_data();
                for (size_t i = 0; i < ids.size(); ++i) {
                    double* row = gt + static_cast<size_t>(ids[i]) * dim;
                    const double* g = gy.data().data() + i * dim;
                    for (size_t j = 0; j < dim; ++j) row[j] += g[j];
                }
            };
            break;
        }

        case Prim::kConv1d: {
            require_inputs(kind, inputs, 3);
            const Tensor& x = inputs[0]->value;
            const Tensor& w = inputs[1]->value;
            const Tensor& b = inputs[2]->value;
            if (x.ndim() != 3 || w.ndim() != 3 || b.ndim() != 1)
                shape_fail(kind, "want x[B,L,Cin], w[k,Cin,Cout], b[Cout]; got " + x.shape_str() +
                                     ", " + w.shape_str() + ", " + b.shape_str());
            const int stride = attrs.stride;
            const int pad = attrs.padding;
            if (stride < 1) shape_fail(kind, "stride must be >= 1");
            if (pad < 0) shape_fail(kind, "padding must be >= 0");
            size_t batch = x.dim(0), len = x.dim(1), cin = x.dim(2);
            size_t kw = w.dim(0), cout = w.dim(2);
            if (w.dim(1) != cin)
                shape_fail(kind, "input channels " + std::to_string(cin) + " != kernel channels " +
                                     std::to_string(w.dim(1)));
            if (b.dim(0) != cout)
                shape_fail(kind, "bias dim " + std::to_string(b.dim(0)) + " != out channels " +
                                     std::to_string(cout));
            if (len + 2 * static_cast<size_t>(pad) < kw)
                shape_fail(kind, "input length " + std::to_string(len) + " (+2*" +
                                     std::to_string(pad) + " pad) shorter than kernel width " +
                                     std::to_string(kw));
            size_t lout = (len + 2 * static_cast<size_t>(pad) - kw) / static_cast<size_t>(stride) + 1;
            std::vector<double> y(batch * lout * cout);
            const double* xp = x.data().data();
            const double* wp = w.data().data();
            for (size_t bi = 0; bi < batch; ++bi)
                for (size_t t = 0; t < lout; ++t) {
                    double* orow = y.data() + (bi * lout + t) * cout;
                    for (size_t co = 0; co < cout; ++co) orow[co] = b[co];
                    for (size_t dk = 0; dk < kw; ++dk) {
                        const long pos = static_cast<long>(t) * stride + static_cast<long>(dk) - pad;
                        if (pos < 0 || pos >= static_cast<long>(len)) continue;
                        const double* xrow = xp + (bi * len + static_cast<size_t>(pos)) * cin;
                        const double* wrow = wp + dk * cin * cout;
                        for (size_t ci = 0; ci < cin; ++ci) {
                            const double xv = xrow[ci];
                            const double* wk = wrow + ci * cout;
                            for (size_t co = 0; co < cout; ++co) orow[co] += xv * wk[co];
                        }
                    }
                }
            out->value = Tensor({batch, lout, cout}, std::move(y));
            out->backward_fn = [batch, len, cin, kw, cout, lout, stride, pad](TapeNode& self) {
                const Tensor& gy = *self.grad;
                const Tensor& xv = self.inputs[0]->value;
                const Tensor& wv = self.inputs[1]->value;
                ensure_grad(*self.inputs[0]);
                ensure_grad(*self.inputs[1]);
                ensure_grad(*self.inputs[2]);
                double* gx = self.inputs[0]->grad->mut_data();
                double* gw = self.inputs[1]->grad->mut_data();
                double* gb = self.inputs[2]->grad->mut_data();
                const double* xp = xv.data().data();
                const double* wp = wv.data().data();
                const double* gp = gy.data().data();
                for (size_t bi = 0; bi < batch; ++bi)
                    for (size_t t = 0; t < lout; ++t) {
                        const double* grow = gp + (bi * lout + t) * cout;
                        for (size_t co = 0; co < cout; ++co) gb[co] += grow[co];
                        for (size_t dk = 0; dk < kw; ++dk) {
                            const long pos =
                                static_cast<long>(t) * stride + static_cast<long>(dk) - pad;
                            if (pos < 0 || pos >= static_cast<long>(len)) continue;
                            const size_t xoff = (bi * len + static_cast<size_t>(pos)) * cin;
                            for (size_t ci = 0; ci < cin; ++ci) {
                                const double xvv = xp[xoff + ci];
                                const double* wk = wp + (dk * cin + ci) * cout;
                                double gxa = 0.0;
                                double* gwk = gw + (dk * cin + ci) * cout;
                                for (size_t co = 0; co < cout; ++co) {
                                    gxa += grow[co] * wk[co];
                                    gwk[co] += grow[co] * xvv;
                                }
                                gx[xoff + ci] += gxa;
                            }
                        }
                    }
            };
            break;
        }

        case Prim::kMaxPool1d: {
            require_inputs(kind, inputs, 1);
            const Tensor& x = inputs[0]->value;
            if (x.ndim() != 3) shape_fail(kind, "want x[B,L,C]; got " + x.shape_str());
            const int width = attrs.width;
            const int stride = attrs.stride > 0 ? attrs.stride : width;
            if (width < 1) shape_fail(kind, "window width must be >= 1");
            size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
            if (len < static_cast<size_t>(width))
                shape_fail(kind, "input length " + std::to_string(len) + " shorter than window " +
                                     std::to_string(width));
            size_t lout = (len - static_cast<size_t>(width)) / static_cast<size_t>(stride) + 1;
            std::vector<double> y(batch * lout * ch);
            std::vector<uint32_t> argmax(batch * lout * ch);
            const double* xp = x.data().data();
            for (size_t bi = 0; bi < batch; ++bi)
                for (size_t t = 0; t < lout; ++t)
                    for (size_t c = 0; c < ch; ++c) {
                        size_t start = t * static_cast<size_t>(stride);
                        size_t best = start;
                        double bv = xp[(bi * len + start) * ch + c];
                        for (size_t d = 1; d < static_cast<size_t>(width); ++d) {
                            double v = xp[(bi * len + start + d) * ch + c];
                            if (v > bv) {  // ties keep the lowest index
                                bv = v;
                                best = start + d;
                            }
                        }
                        y[(bi * lout + t) * ch + c] = bv;
                        argmax[(bi * lout + t) * ch + c] = static_cast<uint32_t>(best);
                    }
            out->value = Tensor({batch, lout, ch}, std::move(y));
            out->backward_fn = [batch, len, ch, lout, argmax](TapeNode& self) {
                const Tensor& gy = *self.grad;
                ensure_grad(*self.inputs[0]);
                double* gx = self.inputs[0]->grad->mut_data();
                for (size_t bi = 0; bi < batch; ++bi)
                    for (size_t t = 0; t < lout; ++t)
                        for (size_t c = 0; c < ch; ++c) {
                            size_t idx = (bi * lout + t) * ch + c;
                            gx[(bi * len + argmax[idx]) * ch + c] += gy[idx];
                        }
            };
            break;
        }

        case Prim::kGlobalAvgPool:
        case Prim::kTemporalMaxPool: {
            require_inputs(kind, inputs, 1);
            const Tensor& x = inputs[0]->value;
            if (x.ndim() != 3) shape_fail(kind, "want x[B,L,C]; got " + x.shape_str());
            size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
            std::vector<double> y(batch * ch);
            const double* xp = x.data().data();
            if (kind == Prim::kGlobalAvgPool) {
                for (size_t bi = 0; bi < batch; ++bi)
                    for (size_t c = 0; c < ch; ++c) {
                        double acc = 0.0;
                        for (size_t t = 0; t < len; ++t) acc += xp[(bi * len + t) * ch + c];
                        y[bi * ch + c] = acc / static_cast<double>(len);
                    }
                out->value = Tensor({batch, ch}, std::move(y));
                out->backward_fn = [batch, len, ch](TapeNode& self) {
                    const Tensor& gy = *self.grad;
                    ensure_grad(*self.inputs[0]);
                    double* gx = self.inputs[0]->grad->mut_data();
                    const double inv = 1.0 / static_cast<double>(len);
                    for (size_t bi = 0; bi < batch; ++bi)
                        for (size_t t = 0; t < len; ++t)
                            for (size_t c = 0; c < ch; ++c)
                                gx[(bi * len + t) * ch + c] += gy[bi * ch + c] * inv;
                };
            } else {
                std::vector<uint32_t> argmax(batch * ch);
                for (size_t bi = 0; bi < batch; ++bi)
                    for (size_t c = 0; c < ch; ++c) {
                        size_t best = 0;
                        double bv = xp[(bi * len) * ch + c];
                        for (size_t t = 1; t < len; ++t) {
                            double v = xp[(bi * len + t) * ch + c];
                            if (v > bv) {
                                bv = v;
                                best = t;
                            }
                        }
                        y[bi * ch + c] = bv;
                        argmax[bi * ch + c] = static_cast<uint32_t>(best);
                    }
                out->value = Tensor({batch, ch}, std::move(y));
                out->backward_fn = [batch, len, ch, argmax](TapeNode& self) {
                    const Tensor& gy = *self.grad;
                    ensure_grad(*self.inputs[0]);
                    double* gx = self.inputs[0]->grad->mut_data();
                    for (size_t bi = 0; bi < batch; ++bi)
                        for (size_t c = 0; c < ch; ++c)
                            gx[(bi * len + argmax[bi * ch + c]) * ch + c] += gy[bi * ch + c];
                };
            }
            break;
        }

        case Prim::kAdd:
        case Prim::kMul: {
            require_inputs(kind, inputs, 2);
            const Tensor& a = inputs[0]->value;
            const Tensor& b = inputs[1]->value;
            if (!a.same_shape(b))
                shape_fail(kind, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
            std::vector<double> y(a.size());
            if (kind == Prim::kAdd) {
                for (size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
                out->value = Tensor(a.shape(), std::move(y));
                out->backward_fn = [](TapeNode& self) {
                    const Tensor& gy = *self.grad;
                    for (int k = 0; k < 2; ++k) {
                        ensure_grad(*self.inputs[static_cast<size_t>(k)]);
                        double* g = self.inputs[static_cast<size_t>(k)]->grad->mut_data();
                        for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                    }
                };
            } else {
                for (size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
                out->value = Tensor(a.shape(), std::move(y));
                out->backward_fn = [](TapeNode& self) {
                    const Tensor& gy = *self.grad;
                    const Tensor& av = self.inputs[0]->value;
                    const Tensor& bv = self.inputs[1]->value;
                    ensure_grad(*self.inputs[0]);
                    ensure_grad(*self.inputs[1]);
                    double* ga = self.inputs[0]->grad->mut_data();
                    double* gb = self.inputs[1]->grad->mut_data();
                    for (size_t i = 0; i < gy.size(); ++i) {
                        ga[i] += gy[i] * bv[i];
                        gb[i] += gy[i] * av[i];
                    }
                };
            }
            break;
        }

        case Prim::kReduceMean:
        case Prim::kReduceSum: {
            require_inputs(kind, inputs, 1);
            const Tensor& x = inputs[0]->value;
            double acc = 0.0;
            for (size_t i = 0; i < x.size(); ++i) acc += x[i];
            const bool mean = kind == Prim::kReduceMean;
            const double scale = mean ? 1.0 / static_cast<double>(x.size()) : 1.0;
            out->value = Tensor::scalar(acc * scale);
            out->backward_fn = [scale](TapeNode& self) {
                const double g = (*self.grad)[0] * scale;
                ensure_grad(*self.inputs[0]);
                double* gx = self.inputs[0]->grad->mut_data();
                for (size_t i = 0; i < self.inputs[0]->value.size(); ++i) gx[i] += g;
            };
            break;
        }

        case Prim::kAbs: {
            require_inputs(kind, inputs, 1);
            const Tensor& x = inputs[0]->value;
            std::vector<double> y(x.size());
            for (size_t i = 0; i < x.size(); ++i) y[i] = std::abs(x[i]);
            out->value = Tensor(x.shape(), std::move(y));
            out->backward_fn = [](TapeNode& self) {
                const Tensor& gy = *self.grad;
                const Tensor& xv = self.inputs[0]->value;
                ensure_grad(*self.inputs[0]);
                double* gx = self.inputs[0]->grad->mut_data();
                // sign(0) = 0, matching the relu convention
                for (size_t i = 0; i < xv.size(); ++i)
                    gx[i] += gy[i] * (xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0));
            };
            break;
        }

        case Prim::kWeightedBce: {
            require_inputs(kind, inputs, 1);
            const Tensor& p = inputs[0]->value;
            const size_t n = p.size();
            if (attrs.labels.size() != n || attrs.mask.size() != n)
                shape_fail(kind, "labels/mask length must match prediction count " +
                                     std::to_string(n));
            size_t present = 0;
            for (uint8_t m : attrs.mask) present += m ? 1 : 0;
            if (present == 0) shape_fail(kind, "mask has no present entries");
            constexpr double kEps = 1e-12;
            double wsum = 0.0, acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                if (!attrs.mask[i]) continue;
                const double w = attrs.labels[i] ? attrs.w_pos : attrs.w_neg;
                const double pc = std::min(std::max(p[i], kEps), 1.0 - kEps);
                acc += w * (attrs.labels[i] ? std::log(pc) : std::log(1.0 - pc));
                wsum += w;
            }
            out->value = Tensor::scalar(-acc / wsum);
            std::vector<uint8_t> labels = attrs.labels, mask = attrs.mask;
            const double wp = attrs.w_pos, wn = attrs.w_neg;
            out->backward_fn = [labels, mask, wp, wn, wsum](TapeNode& self) {
                const double g = (*self.grad)[0];
                const Tensor& pv = self.inputs[0]->value;
                ensure_grad(*self.inputs[0]);
                double* gp = self.inputs[0]->grad->mut_data();
                constexpr double kEps = 1e-12;
                for (size_t i = 0; i < pv.size(); ++i) {
                    if (!mask[i]) continue;
                    const double raw = pv[i];
                    if (raw <= kEps || raw >= 1.0 - kEps) continue;  // clamp region: flat
                    const double w = labels[i] ? wp : wn;
                    const double y = labels[i] ? 1.0 : 0.0;
                    gp[i] += g * w * (raw - y) / (raw * (1.0 - raw) * wsum);
                }
            };
            break;
        }

        case Prim::kLeaf:
        default:
            throw std::invalid_argument("unknown primitive id: " +
                                        std::to_string(static_cast<int>(kind)));
    }

    return out;
}

// Reverse-mode sweep from a scalar loss. Grads accumulate; clear with
// zero_grads between steps.
inline void backward(const NodePtr& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss node");
    if (loss->value.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss->value.shape_str());

    // iterative post-order DFS; reverse finish order = topological order
    std::vector<TapeNode*> order;
    std::unordered_set<TapeNode*> visited;
    std::vector<std::pair<TapeNode*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            TapeNode* child = node->inputs[next].get();
            ++next;
            if (visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    detail::ensure_grad(*loss);
    loss->grad->mut_data()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode& node = **it;
        if (node.grad && node.backward_fn) node.backward_fn(node);
    }
}

// A named, trainable leaf. Parameter nodes persist across forward passes;
// is_weight marks matrices/kernels that L1 regularization applies to.
struct Parameter {
    std::string name;
    NodePtr node;
    bool trainable = true;
    bool is_weight = true;
};

inline void zero_grads(std::vector<Parameter>& params) {
    for (auto& p : params)
        if (p.node) p.node->grad.reset();
}

// --- thin wrappers over apply_primitive ---

inline NodePtr constant(Tensor v) { return TapeNode::leaf(std::move(v)); }

inline NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    return apply_primitive(Prim::kLinear, {x, w, b});
}
inline NodePtr relu(const NodePtr& x) { return apply_primitive(Prim::kRelu, {x}); }
inline NodePtr sigmoid(const NodePtr& x) { return apply_primitive(Prim::kSigmoid, {x}); }
inline NodePtr concat(const std::vector<NodePtr>& xs) {
    return apply_primitive(Prim::kConcat, xs);
}
inline NodePtr embedding_lookup(const NodePtr& table, std::vector<int> ids,
                                std::vector<size_t> ids_shape) {
    PrimAttrs a;
    a.ids = std::move(ids);
    a.ids_shape = std::move(ids_shape);
    return apply_primitive(Prim::kEmbeddingLookup, {table}, a);
}
inline NodePtr conv1d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int stride = 1,
                      int padding = 0) {
    PrimAttrs a;
    a.stride = stride;
    a.padding = padding;
    return apply_primitive(Prim::kConv1d, {x, w, b}, a);
}
inline NodePtr maxpool1d(const NodePtr& x, int width, int stride = 0) {
    PrimAttrs a;
    a.width = width;
    a.stride = stride;
    return apply_primitive(Prim::kMaxPool1d, {x}, a);
}
inline NodePtr global_avg_pool(const NodePtr& x) {
    return apply_primitive(Prim::kGlobalAvgPool, {x});
}
inline NodePtr temporal_max_pool(const NodePtr& x) {
    return apply_primitive(Prim::kTemporalMaxPool, {x});
}
inline NodePtr add(const NodePtr& a, const NodePtr& b) {
    return apply_primitive(Prim::kAdd, {a, b});
}
inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
    return apply_primitive(Prim::kMul, {a, b});
}
inline NodePtr reduce_mean(const NodePtr& x) { return apply_primitive(Prim::kReduceMean, {x}); }
inline NodePtr reduce_sum(const NodePtr& x) { return apply_primitive(Prim::kReduceSum, {x}); }
inline NodePtr abs_node(const NodePtr& x) { return apply_primitive(Prim::kAbs, {x}); }
inline NodePtr weighted_bce_node(const NodePtr& pred, std::vector<uint8_t> labels,
                                 std::vector<uint8_t> mask, double w_pos, double w_neg) {
    PrimAttrs a;
    a.labels = std::move(labels);
    a.mask = std::move(mask);
    a.w_pos = w_pos;
    a.w_neg = w_neg;
    return apply_primitive(Prim::kWeightedBce, {pred}, a);
}

}  // namespace emt
