#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "ctdl/layers.hpp"
#include "ctdl/tensor.hpp"

namespace ctdl {

enum class OpKind { Input, Conv, BatchNorm, Relu, Pool, Unpool, Concat, StopGrad };
enum class RunMode { Train, Eval };

template <typename T>
struct ParamT {
    TensorT<T> value; // conv weights (cout, cin, k, k); bn gamma/beta as (c,1,1,1)
    TensorT<T> grad;
};

template <typename T>
struct BnBuffersT {
    std::vector<T> running_mean, running_var;
};

struct Node {
    OpKind kind = OpKind::Input;
    std::array<int, 2> in{-1, -1};
    int weight = -1, bias = -1; // param ids (conv: w/b, bn: gamma/beta)
    int bn_id = -1;
    int kernel = 0;
    int channels = 0; // output channels
};

/// Acyclic layer graph with explicit skip edges; node order is execution
/// order. Heads are linear outputs (the bridge ends).
template <typename T>
class GraphT {
public:
    std::vector<Node> nodes;
    std::vector<ParamT<T>> params;
    std::vector<BnBuffersT<T>> bn;
    std::vector<int> heads;
    int input_node = -1;
    int backbone_out = -1;
    int depth = 0;

    int add_input(int channels);
    int add_conv(int src, int kernel, int out_channels);
    int add_bn(int src);
    int add_relu(int src);
    int add_pool(int src);
    int add_unpool(int src);
    int add_concat(int a, int b);
    int add_stop_grad(int src);
    /// conv3x3 -> batch norm -> ReLU
    int add_basic_block(int src, int out_channels);
    void mark_head(int node) { heads.push_back(node); }

    std::size_t parameter_count() const;
    void init_weights(std::mt19937_64& rng); // He-uniform convs, gamma=1, beta=0
    void zero_grads();
    int spatial_divisor() const { return 1 << (depth > 0 ? depth : 0); }

private:
    int push(Node n) {
        nodes.push_back(n);
        return int(nodes.size()) - 1;
    }
    int new_param(int a, int b, int c, int d) {
        params.push_back({TensorT<T>(a, b, c, d), TensorT<T>(a, b, c, d)});
        return int(params.size()) - 1;
    }
};

template <typename T>
struct ForwardCacheT {
    std::vector<TensorT<T>> act;
    std::vector<BnBatchStats<T>> bn_stats; // indexed by node
};

/// Executes the graph; returns one tensor per head.
template <typename T>
std::vector<TensorT<T>> forward(GraphT<T>& net, const TensorT<T>& x, RunMode mode,
                                ForwardCacheT<T>& cache);

/// Reverse-mode sweep; accumulates into params[i].grad. head_grads must
/// match the head outputs. Returns the gradient w.r.t. the input.
template <typename T>
TensorT<T> backward(GraphT<T>& net, const ForwardCacheT<T>& cache,
                    const std::vector<TensorT<T>>& head_grads, RunMode mode);

/// Standard U-Net: `depth` encoder levels of two basic blocks (channels
/// doubling per level, 2x2 mean pool between), symmetric decoder with
/// nearest-neighbor unpooling, a basic block, skip concatenation and two
/// basic blocks. Ends at the last decoder feature map.
template <typename T>
GraphT<T> build_backbone(int in_channels, int base_channels, int depth);

/// Appends a bridge: basic block, basic block, linear 1x1 conv. Several
/// bridges may share one backbone.
template <typename T>
int attach_bridge(GraphT<T>& net, int out_channels);

using Graph = GraphT<double>;
using ForwardCache = ForwardCacheT<double>;

/// Checkpoint persistence: `path` gets a text manifest (layer id, shape,
/// offset) plus key=value metadata, `path`.bin the concatenated parameter
/// and batch-norm buffers as a binary container.
void save_graph(const std::string& path, const Graph& net,
                const std::vector<std::pair<std::string, std::string>>& metadata);
Graph load_graph(const std::string& path,
                 std::vector<std::pair<std::string, std::string>>* metadata = nullptr);

} // namespace ctdl
