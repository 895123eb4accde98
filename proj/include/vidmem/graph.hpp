#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "vidmem/tensor.hpp"

namespace vidmem {

// Reverse-mode tape. Nodes are created in evaluation order, so the creation
// order is already topological; backward walks it in reverse.
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Node&)> back;  // empty for leaves
        Param* param = nullptr;           // set for parameter leaves
    };

    Node* leaf(Tensor value);          // constant, no gradient tracking out
    Node* param(Param& p);             // gradient accumulates into p.grad

    // Matrix products on the 2D view (leading dims collapsed to rows).
    Node* matmul(Node* a, Node* b);     // [m×k]·[k×n]
    Node* matmul_nt(Node* a, Node* b);  // [m×k]·[n×k]ᵀ -> [m×n]

    Node* add(Node* a, Node* b);                 // same shape
    Node* add_row_broadcast(Node* x, Node* row); // row added to every 2D-view row
    Node* scale(Node* x, double c);
    Node* mul(Node* a, Node* b);                 // elementwise, same shape

    Node* gelu(Node* x);          // tanh approximation
    Node* softmax_rows(Node* x);  // per 2D-view row, max-subtracted
    Node* layer_norm(Node* x, Node* gain, Node* bias, double eps);

    Node* slice_rows(Node* x, std::size_t start, std::size_t count);
    Node* concat_rows(const std::vector<Node*>& parts);
    Node* slice_cols(Node* x, std::size_t start, std::size_t count);
    Node* concat_cols(const std::vector<Node*>& parts);

    Node* gather_rows(Node* table, const std::vector<std::size_t>& ids);
    Node* sum(Node* x);  // scalar

    // Mean cross-entropy of logits rows against target ids; only the listed
    // rows contribute (loss masking).
    Node* cross_entropy_rows(Node* logits, const std::vector<std::size_t>& rows,
                             const std::vector<std::size_t>& targets);

    // Seeds d(root)=1, walks the tape backwards, then flushes parameter-leaf
    // gradients into their Param::grad. Call at most once per built graph.
    void backward(Node* root);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    Node* make(Tensor value);
    std::deque<Node> nodes_;
};

using NodeRef = Graph::Node*;

}  // namespace vidmem
