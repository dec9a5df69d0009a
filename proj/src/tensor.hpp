#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace privit::ad {

class Graph;

// One tape entry. Values and grads are dense row-major doubles; shape is
// either [n] or [rows, cols]. grad is allocated only for nodes that
// require it and always matches value in length.
struct Node {
    std::vector<int>      shape;
    std::vector<double>   value;
    std::vector<double>   grad;
    bool                  requires_grad = false;
    std::function<void()> backward;  // accumulates this->grad into parents
    Graph *               graph = nullptr;
    int                   id = 0;  // creation index; reverse id order is a
                                   // reverse topological order of the tape
};

struct Tensor {
    Node * node = nullptr;

    bool defined() const { return node != nullptr; }
    const std::vector<int> &    shape() const { return node->shape; }
    const std::vector<double> & value() const { return node->value; }
    const std::vector<double> & grad() const { return node->grad; }
    int    numel() const { return static_cast<int>(node->value.size()); }
    double scalar() const { return node->value[0]; }
    int    rows() const { return node->shape[0]; }
    int    cols() const { return node->shape.size() == 2 ? node->shape[1] : 1; }
};

// Owns the tape. A graph is built per forward pass and discarded afterwards;
// parameters persist outside as plain arrays and re-enter as leaves.
class Graph {
  public:
    Tensor input(std::vector<int> shape, std::vector<double> value, bool requires_grad);
    Tensor constant(std::vector<int> shape, std::vector<double> value) {
        return input(std::move(shape), std::move(value), false);
    }

    // Seeds d(root)/d(root) = 1 and walks the tape once in reverse creation
    // order. root must be scalar.
    void backward(Tensor root);

    Tensor make(std::vector<int> shape, bool requires_grad);

    size_t size() const { return tape_.size(); }

  private:
    std::vector<std::unique_ptr<Node>> tape_;
};

std::string shape_str(const std::vector<int> & s);

// --- primitive ops ------------------------------------------------------

Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);

Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
// k*a + c, elementwise with scalar constants
Tensor affine(Tensor a, double k, double c);
Tensor square(Tensor a);
Tensor gelu(Tensor a);

// row-wise softmax with max subtraction; 1-D input is a single row
Tensor softmax_rows(Tensor a);
// (x - mean) / sqrt(var + eps) * gamma + beta over the last axis,
// population variance
Tensor layernorm_rows(Tensor x, Tensor gamma, Tensor beta, double eps);

// mean over the batch of -log softmax(logits)[label]
Tensor cross_entropy(Tensor logits, const std::vector<int> & labels);
// T^2-scaled, batch-averaged KL(softmax(teacher/T) || softmax(student/T));
// teacher_logits are constants
Tensor kd_div(Tensor student_logits, const std::vector<double> & teacher_logits, double temperature);

Tensor sum(Tensor a);
Tensor abs_sum(Tensor a);

Tensor slice(Tensor a, int offset, int len);              // 1-D view of flat data
Tensor rows(Tensor a, int r0, int r1);
Tensor cols(Tensor a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor> & parts);
Tensor concat_cols(const std::vector<Tensor> & parts);
Tensor repeat_cols(Tensor v, int n);                       // [n] -> [n x m], row i = v[i]
Tensor reshape(Tensor a, std::vector<int> shape);

// --- gradient oracle ----------------------------------------------------

// Rebuilds f on a fresh graph per evaluation. Returns the max over
// coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// with numeric from central differences.
using ScalarFn = std::function<Tensor(Graph &, Tensor)>;
double grad_check(const ScalarFn & f, const std::vector<int> & shape, const std::vector<double> & x0,
                  double step);

}  // namespace privit::ad
