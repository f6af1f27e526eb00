#include "specmask/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace specmask {

Architecture Architecture::small_cnn(int num_classes, int side) {
  Architecture a;
  a.layers.push_back({LayerSpec::Kind::conv, 1, 8, 3, 1, 0, 0});
  a.layers.push_back({LayerSpec::Kind::relu});
  a.layers.push_back({LayerSpec::Kind::maxpool2});
  a.layers.push_back({LayerSpec::Kind::conv, 8, 16, 3, 1, 0, 0});
  a.layers.push_back({LayerSpec::Kind::relu});
  a.layers.push_back({LayerSpec::Kind::maxpool2});
  a.layers.push_back({LayerSpec::Kind::flatten});
  const int feat = 16 * (side / 4) * (side / 4);
  a.layers.push_back({LayerSpec::Kind::linear, 0, 0, 0, 0, feat, num_classes});
  return a;
}

Architecture Architecture::tiny_cnn(int num_classes, int side) {
  Architecture a;
  a.layers.push_back({LayerSpec::Kind::conv, 1, 4, 3, 1, 0, 0});
  a.layers.push_back({LayerSpec::Kind::relu});
  a.layers.push_back({LayerSpec::Kind::maxpool2});
  a.layers.push_back({LayerSpec::Kind::flatten});
  const int feat = 4 * (side / 2) * (side / 2);
  a.layers.push_back({LayerSpec::Kind::linear, 0, 0, 0, 0, feat, num_classes});
  return a;
}

std::string Architecture::descriptor() const {
  std::ostringstream out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (i) out << ";";
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        out << "conv(" << l.in_ch << "," << l.out_ch << "," << l.ksize << "," << l.pad << ")";
        break;
      case LayerSpec::Kind::relu:
        out << "relu";
        break;
      case LayerSpec::Kind::maxpool2:
        out << "maxpool2";
        break;
      case LayerSpec::Kind::flatten:
        out << "flatten";
        break;
      case LayerSpec::Kind::linear:
        out << "linear(" << l.in_features << "," << l.out_features << ")";
        break;
    }
  }
  return out.str();
}

namespace {

std::vector<int> parse_int_args(const std::string& body, const std::string& where) {
  std::vector<int> args;
  std::istringstream in(body);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    size_t used = 0;
    args.push_back(std::stoi(tok, &used));
    if (used != tok.size()) throw std::invalid_argument("bad layer argument in " + where);
  }
  return args;
}

}  // namespace

Architecture Architecture::parse(const std::string& descriptor) {
  Architecture a;
  std::istringstream in(descriptor);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) throw std::invalid_argument("architecture: empty layer in descriptor");
    const auto open = item.find('(');
    std::string name = open == std::string::npos ? item : item.substr(0, open);
    std::vector<int> args;
    if (open != std::string::npos) {
      if (item.back() != ')') throw std::invalid_argument("architecture: missing ')' in " + item);
      args = parse_int_args(item.substr(open + 1, item.size() - open - 2), item);
    }
    LayerSpec l;
    if (name == "conv") {
      if (args.size() != 4) throw std::invalid_argument("architecture: conv expects 4 args");
      l = {LayerSpec::Kind::conv, args[0], args[1], args[2], args[3], 0, 0};
    } else if (name == "relu") {
      l.kind = LayerSpec::Kind::relu;
    } else if (name == "maxpool2") {
      l.kind = LayerSpec::Kind::maxpool2;
    } else if (name == "flatten") {
      l.kind = LayerSpec::Kind::flatten;
    } else if (name == "linear") {
      if (args.size() != 2) throw std::invalid_argument("architecture: linear expects 2 args");
      l = {LayerSpec::Kind::linear, 0, 0, 0, 0, args[0], args[1]};
    } else {
      throw std::invalid_argument("architecture: unknown layer '" + name + "'");
    }
    a.layers.push_back(l);
  }
  if (a.layers.empty()) throw std::invalid_argument("architecture: empty descriptor");
  return a;
}

std::vector<std::vector<int>> Architecture::param_shapes() const {
  std::vector<std::vector<int>> shapes;
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerSpec::Kind::conv) {
      shapes.push_back({l.out_ch, l.in_ch, l.ksize, l.ksize});
      shapes.push_back({l.out_ch});
    } else if (l.kind == LayerSpec::Kind::linear) {
      shapes.push_back({l.out_features, l.in_features});
      shapes.push_back({l.out_features});
    }
  }
  return shapes;
}

int64_t Architecture::param_count() const {
  int64_t n = 0;
  for (const auto& s : param_shapes()) {
    int64_t e = 1;
    for (int x : s) e *= x;
    n += e;
  }
  return n;
}

int Architecture::num_classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->kind == LayerSpec::Kind::linear) return it->out_features;
  }
  throw std::logic_error("architecture: no linear layer");
}

std::vector<Tensor> Architecture::init_params(Rng& rng) const {
  std::vector<Tensor> params;
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerSpec::Kind::conv) {
      Tensor w = Tensor::zeros({l.out_ch, l.in_ch, l.ksize, l.ksize});
      const double std = std::sqrt(2.0 / (l.in_ch * l.ksize * l.ksize));
      for (double& x : w.mutable_data()) x = rng.normal() * std;
      params.push_back(w);
      params.push_back(Tensor::zeros({l.out_ch}));
    } else if (l.kind == LayerSpec::Kind::linear) {
      Tensor w = Tensor::zeros({l.out_features, l.in_features});
      const double std = std::sqrt(2.0 / l.in_features);
      for (double& x : w.mutable_data()) x = rng.normal() * std;
      params.push_back(w);
      params.push_back(Tensor::zeros({l.out_features}));
    }
  }
  return params;
}

Tensor Architecture::forward(Tape& tape, const Tensor& images,
                             const std::vector<Tensor>& params) const {
  const auto shapes = param_shapes();
  if (params.size() != shapes.size()) {
    throw std::invalid_argument("forward: expected " + std::to_string(shapes.size()) +
                                " parameter tensors, got " + std::to_string(params.size()));
  }
  Tensor h = images;
  size_t p = 0;
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        h = conv2d(tape, h, params[p], params[p + 1], l.pad);
        p += 2;
        break;
      case LayerSpec::Kind::relu:
        h = relu(tape, h);
        break;
      case LayerSpec::Kind::maxpool2:
        h = maxpool2(tape, h);
        break;
      case LayerSpec::Kind::flatten:
        h = flatten(tape, h);
        break;
      case LayerSpec::Kind::linear:
        h = linear(tape, h, params[p], params[p + 1]);
        p += 2;
        break;
    }
  }
  return h;
}

}  // namespace specmask
