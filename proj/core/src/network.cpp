#include "ctdl/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ctdl/io.hpp"

namespace ctdl {

namespace {

template <typename T>
std::vector<T> param_as_vector(const TensorT<T>& t) {
    return t.v;
}

} // namespace

template <typename T>
int GraphT<T>::add_input(int channels) {
    Node n;
    n.kind = OpKind::Input;
    n.channels = channels;
    const int id = push(n);
    input_node = id;
    return id;
}

template <typename T>
int GraphT<T>::add_conv(int src, int kernel, int out_channels) {
    Node n;
    n.kind = OpKind::Conv;
    n.in[0] = src;
    n.kernel = kernel;
    n.channels = out_channels;
    n.weight = new_param(out_channels, nodes[src].channels, kernel, kernel);
    n.bias = new_param(out_channels, 1, 1, 1);
    return push(n);
}

template <typename T>
int GraphT<T>::add_bn(int src) {
    Node n;
    n.kind = OpKind::BatchNorm;
    n.in[0] = src;
    n.channels = nodes[src].channels;
    n.weight = new_param(n.channels, 1, 1, 1); // gamma
    n.bias = new_param(n.channels, 1, 1, 1);   // beta
    n.bn_id = int(bn.size());
    bn.push_back({std::vector<T>(std::size_t(n.channels), T(0)),
                  std::vector<T>(std::size_t(n.channels), T(1))});
    return push(n);
}

template <typename T>
int GraphT<T>::add_relu(int src) {
    Node n;
    n.kind = OpKind::Relu;
    n.in[0] = src;
    n.channels = nodes[src].channels;
    return push(n);
}

template <typename T>
int GraphT<T>::add_pool(int src) {
    Node n;
    n.kind = OpKind::Pool;
    n.in[0] = src;
    n.channels = nodes[src].channels;
    return push(n);
}

template <typename T>
int GraphT<T>::add_unpool(int src) {
    Node n;
    n.kind = OpKind::Unpool;
    n.in[0] = src;
    n.channels = nodes[src].channels;
    return push(n);
}

template <typename T>
int GraphT<T>::add_concat(int a, int b) {
    Node n;
    n.kind = OpKind::Concat;
    n.in[0] = a;
    n.in[1] = b;
    n.channels = nodes[a].channels + nodes[b].channels;
    return push(n);
}

template <typename T>
int GraphT<T>::add_stop_grad(int src) {
    Node n;
    n.kind = OpKind::StopGrad;
    n.in[0] = src;
    n.channels = nodes[src].channels;
    return push(n);
}

template <typename T>
int GraphT<T>::add_basic_block(int src, int out_channels) {
    return add_relu(add_bn(add_conv(src, 3, out_channels)));
}

template <typename T>
std::size_t GraphT<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params) total += p.value.size();
    return total;
}

template <typename T>
void GraphT<T>::init_weights(std::mt19937_64& rng) {
    for (const auto& node : nodes) {
        if (node.kind == OpKind::Conv) {
            auto& w = params[node.weight].value;
            const double fan_in = double(w.c) * w.h * w.w;
            const double bound = std::sqrt(6.0 / fan_in);
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& v : w.v) v = T(u(rng));
            for (auto& v : params[node.bias].value.v) v = T(0);
        } else if (node.kind == OpKind::BatchNorm) {
            for (auto& v : params[node.weight].value.v) v = T(1);
            for (auto& v : params[node.bias].value.v) v = T(0);
            auto& buf = bn[node.bn_id];
            std::fill(buf.running_mean.begin(), buf.running_mean.end(), T(0));
            std::fill(buf.running_var.begin(), buf.running_var.end(), T(1));
        }
    }
}

template <typename T>
void GraphT<T>::zero_grads() {
    for (auto& p : params) std::fill(p.grad.v.begin(), p.grad.v.end(), T(0));
}

template <typename T>
std::vector<TensorT<T>> forward(GraphT<T>& net, const TensorT<T>& x, RunMode mode,
                                ForwardCacheT<T>& cache) {
    if (net.input_node < 0) throw std::logic_error("forward: graph has no input node");
    if (x.c != net.nodes[net.input_node].channels)
        throw std::invalid_argument("forward: input channel mismatch");
    cache.act.assign(net.nodes.size(), TensorT<T>());
    cache.bn_stats.assign(net.nodes.size(), BnBatchStats<T>());
    const bool train = mode == RunMode::Train;

    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        const Node& n = net.nodes[i];
        switch (n.kind) {
            case OpKind::Input:
                cache.act[i] = x;
                break;
            case OpKind::Conv:
                conv2d_forward(cache.act[n.in[0]], net.params[n.weight].value,
                               param_as_vector(net.params[n.bias].value), cache.act[i]);
                break;
            case OpKind::BatchNorm: {
                auto& buf = net.bn[n.bn_id];
                batch_norm_forward(cache.act[n.in[0]], param_as_vector(net.params[n.weight].value),
                                   param_as_vector(net.params[n.bias].value), buf.running_mean,
                                   buf.running_var, train, cache.act[i], cache.bn_stats[i]);
                break;
            }
            case OpKind::Relu:
                relu_forward(cache.act[n.in[0]], cache.act[i]);
                break;
            case OpKind::Pool:
                avg_pool2_forward(cache.act[n.in[0]], cache.act[i]);
                break;
            case OpKind::Unpool:
                unpool2_forward(cache.act[n.in[0]], cache.act[i]);
                break;
            case OpKind::Concat:
                concat_forward(cache.act[n.in[0]], cache.act[n.in[1]], cache.act[i]);
                break;
            case OpKind::StopGrad:
                cache.act[i] = cache.act[n.in[0]];
                break;
        }
    }

    std::vector<TensorT<T>> out;
    out.reserve(net.heads.size());
    for (int h : net.heads) out.push_back(cache.act[h]);
    return out;
}

template <typename T>
TensorT<T> backward(GraphT<T>& net, const ForwardCacheT<T>& cache,
                    const std::vector<TensorT<T>>& head_grads, RunMode mode) {
    if (head_grads.size() != net.heads.size())
        throw std::invalid_argument("backward: head gradient count mismatch");
    const bool train = mode == RunMode::Train;

    std::vector<TensorT<T>> grad(net.nodes.size());
    auto accumulate = [&](int node, const TensorT<T>& g) {
        if (grad[node].size() == 0) {
            grad[node] = g;
        } else {
            for (std::size_t j = 0; j < g.size(); ++j) grad[node].v[j] += g.v[j];
        }
    };
    for (std::size_t h = 0; h < net.heads.size(); ++h) {
        if (!head_grads[h].same_shape(cache.act[net.heads[h]]))
            throw std::invalid_argument("backward: head gradient shape mismatch");
        accumulate(net.heads[h], head_grads[h]);
    }

    for (int i = int(net.nodes.size()) - 1; i >= 0; --i) {
        if (grad[i].size() == 0) continue; // node not on any path to a head
        const Node& n = net.nodes[i];
        const TensorT<T>& g = grad[i];
        TensorT<T> gx;
        switch (n.kind) {
            case OpKind::Input:
                break;
            case OpKind::Conv: {
                std::vector<T> gb(std::size_t(n.channels), T(0));
                conv2d_backward(cache.act[n.in[0]], net.params[n.weight].value, g, gx,
                                net.params[n.weight].grad, gb);
                for (int ch = 0; ch < n.channels; ++ch)
                    net.params[n.bias].grad.v[std::size_t(ch)] += gb[std::size_t(ch)];
                accumulate(n.in[0], gx);
                break;
            }
            case OpKind::BatchNorm: {
                std::vector<T> gg(std::size_t(n.channels), T(0)), gb(std::size_t(n.channels), T(0));
                batch_norm_backward(cache.act[n.in[0]], param_as_vector(net.params[n.weight].value),
                                    cache.bn_stats[i], g, train, gx, gg, gb);
                for (int ch = 0; ch < n.channels; ++ch) {
                    net.params[n.weight].grad.v[std::size_t(ch)] += gg[std::size_t(ch)];
                    net.params[n.bias].grad.v[std::size_t(ch)] += gb[std::size_t(ch)];
                }
                accumulate(n.in[0], gx);
                break;
            }
            case OpKind::Relu:
                relu_backward(cache.act[n.in[0]], g, gx);
                accumulate(n.in[0], gx);
                break;
            case OpKind::Pool:
                avg_pool2_backward(cache.act[n.in[0]], g, gx);
                accumulate(n.in[0], gx);
                break;
            case OpKind::Unpool:
                unpool2_backward(cache.act[n.in[0]], g, gx);
                accumulate(n.in[0], gx);
                break;
            case OpKind::Concat: {
                TensorT<T> ga, gb;
                concat_backward(net.nodes[n.in[0]].channels, net.nodes[n.in[1]].channels, g, ga,
                                gb);
                accumulate(n.in[0], ga);
                accumulate(n.in[1], gb);
                break;
            }
            case OpKind::StopGrad:
                break; // gradient barrier: nothing flows upstream
        }
    }

    if (net.input_node >= 0 && grad[net.input_node].size() != 0) return grad[net.input_node];
    const TensorT<T>& in = cache.act[net.input_node];
    return TensorT<T>(in.n, in.c, in.h, in.w);
}

template <typename T>
GraphT<T> build_backbone(int in_channels, int base_channels, int depth) {
    if (in_channels < 1 || base_channels < 1 || depth < 1)
        throw std::invalid_argument("build_backbone: bad configuration");
    GraphT<T> net;
    net.depth = depth;
    int cur = net.add_input(in_channels);

    std::vector<int> skips;
    for (int lvl = 0; lvl < depth; ++lvl) {
        const int ch = base_channels << lvl;
        cur = net.add_basic_block(cur, ch);
        cur = net.add_basic_block(cur, ch);
        skips.push_back(cur);
        cur = net.add_pool(cur);
    }
    const int bottleneck_ch = base_channels << depth;
    cur = net.add_basic_block(cur, bottleneck_ch);
    cur = net.add_basic_block(cur, bottleneck_ch);
    for (int lvl = depth - 1; lvl >= 0; --lvl) {
        const int ch = base_channels << lvl;
        cur = net.add_unpool(cur);
        cur = net.add_basic_block(cur, ch);
        cur = net.add_concat(skips[std::size_t(lvl)], cur);
        cur = net.add_basic_block(cur, ch);
        cur = net.add_basic_block(cur, ch);
    }
    net.backbone_out = cur;
    return net;
}

template <typename T>
int attach_bridge(GraphT<T>& net, int out_channels) {
    if (net.backbone_out < 0) throw std::logic_error("attach_bridge: no backbone output");
    int cur = net.backbone_out;
    const int ch = net.nodes[cur].channels;
    cur = net.add_basic_block(cur, ch);
    cur = net.add_basic_block(cur, ch);
    cur = net.add_conv(cur, 1, out_channels); // linear output, no norm/activation
    net.mark_head(cur);
    return cur;
}

template struct ParamT<double>;
template class GraphT<double>;
template std::vector<TensorT<double>> forward(GraphT<double>&, const TensorT<double>&, RunMode,
                                              ForwardCacheT<double>&);
template TensorT<double> backward(GraphT<double>&, const ForwardCacheT<double>&,
                                  const std::vector<TensorT<double>>&, RunMode);
template GraphT<double> build_backbone<double>(int, int, int);
template int attach_bridge<double>(GraphT<double>&, int);

void save_graph(const std::string& path, const Graph& net,
                const std::vector<std::pair<std::string, std::string>>& metadata) {
    std::ostringstream manifest;
    manifest << "ctdl-checkpoint 1\n";
    for (const auto& [k, v] : metadata) {
        if (k.find_first_of(" =\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw ConfigError("save_graph: invalid metadata key/value");
        manifest << "meta " << k << "=" << v << "\n";
    }
    manifest << "graph input " << net.input_node << " backbone " << net.backbone_out << " depth "
             << net.depth << "\n";
    for (const auto& n : net.nodes)
        manifest << "node " << int(n.kind) << " " << n.in[0] << " " << n.in[1] << " " << n.weight
                 << " " << n.bias << " " << n.bn_id << " " << n.kernel << " " << n.channels << "\n";
    for (int h : net.heads) manifest << "head " << h << "\n";

    Container payload;
    std::size_t offset = 0;
    for (const auto& p : net.params) {
        manifest << "param " << p.value.n << " " << p.value.c << " " << p.value.h << " "
                 << p.value.w << " " << offset << "\n";
        for (double v : p.value.v) payload.data.push_back(float(v));
        offset += p.value.size();
    }
    for (const auto& b : net.bn) {
        manifest << "bnbuf " << b.running_mean.size() << " " << offset << "\n";
        for (double v : b.running_mean) payload.data.push_back(float(v));
        for (double v : b.running_var) payload.data.push_back(float(v));
        offset += 2 * b.running_mean.size();
    }
    payload.dims = {std::uint32_t(payload.data.size())};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("save_graph: cannot open " + path);
    out << manifest.str();
    if (!out) throw FormatError("save_graph: write failed for " + path);
    write_container(path + ".bin", payload);
}

Graph load_graph(const std::string& path,
                 std::vector<std::pair<std::string, std::string>>* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_graph: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "ctdl-checkpoint 1")
        throw FormatError("load_graph: bad manifest header");

    Graph net;
    struct ParamRec {
        int n, c, h, w;
        std::size_t offset;
    };
    std::vector<ParamRec> precs;
    struct BnRec {
        std::size_t channels, offset;
    };
    std::vector<BnRec> brecs;

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            std::string rest;
            std::getline(ss >> std::ws, rest);
            const auto eq = rest.find('=');
            if (eq == std::string::npos) throw FormatError("load_graph: bad meta line");
            if (metadata) metadata->emplace_back(rest.substr(0, eq), rest.substr(eq + 1));
        } else if (tag == "graph") {
            std::string a, b, c;
            ss >> a >> net.input_node >> b >> net.backbone_out >> c >> net.depth;
            if (!ss || a != "input" || b != "backbone" || c != "depth")
                throw FormatError("load_graph: bad graph line");
        } else if (tag == "node") {
            Node n;
            int kind;
            ss >> kind >> n.in[0] >> n.in[1] >> n.weight >> n.bias >> n.bn_id >> n.kernel >>
                n.channels;
            if (!ss || kind < 0 || kind > int(OpKind::StopGrad))
                throw FormatError("load_graph: bad node line");
            n.kind = OpKind(kind);
            net.nodes.push_back(n);
        } else if (tag == "head") {
            int h;
            ss >> h;
            if (!ss) throw FormatError("load_graph: bad head line");
            net.heads.push_back(h);
        } else if (tag == "param") {
            ParamRec r;
            ss >> r.n >> r.c >> r.h >> r.w >> r.offset;
            if (!ss) throw FormatError("load_graph: bad param line");
            precs.push_back(r);
        } else if (tag == "bnbuf") {
            BnRec r;
            ss >> r.channels >> r.offset;
            if (!ss) throw FormatError("load_graph: bad bnbuf line");
            brecs.push_back(r);
        } else {
            throw FormatError("load_graph: unknown manifest tag '" + tag + "'");
        }
    }

    const Container payload = read_container(path + ".bin");
    for (const auto& r : precs) {
        ParamT<double> p{Tensor(r.n, r.c, r.h, r.w), Tensor(r.n, r.c, r.h, r.w)};
        if (r.offset + p.value.size() > payload.data.size())
            throw FormatError("load_graph: payload too small");
        for (std::size_t j = 0; j < p.value.size(); ++j)
            p.value.v[j] = double(payload.data[r.offset + j]);
        net.params.push_back(std::move(p));
    }
    for (const auto& r : brecs) {
        BnBuffersT<double> b;
        if (r.offset + 2 * r.channels > payload.data.size())
            throw FormatError("load_graph: payload too small");
        b.running_mean.resize(r.channels);
        b.running_var.resize(r.channels);
        for (std::size_t j = 0; j < r.channels; ++j) {
            b.running_mean[j] = double(payload.data[r.offset + j]);
            b.running_var[j] = double(payload.data[r.offset + r.channels + j]);
        }
        net.bn.push_back(std::move(b));
    }

    // structural sanity: node references must be resolvable
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        const Node& n = net.nodes[i];
        for (int e = 0; e < 2; ++e)
            if (n.in[e] >= int(i)) throw FormatError("load_graph: node edge out of order");
        if (n.weight >= int(net.params.size()) || n.bias >= int(net.params.size()) ||
            n.bn_id >= int(net.bn.size()))
            throw FormatError("load_graph: dangling parameter reference");
    }
    for (int h : net.heads)
        if (h < 0 || h >= int(net.nodes.size())) throw FormatError("load_graph: bad head id");
    return net;
}

} // namespace ctdl
