#include "ldmr/hresnet.hpp"

#include "ldmr/checkpoint.hpp"
#include "ldmr/rng.hpp"

namespace ldmr {

using nn::Tensor;

namespace {

HResNet::ConvLayer make_conv(int cout, int cin, int k, float std,
                             uint64_t seed) {
  HResNet::ConvLayer c;
  c.w = Tensor::randn({cout, cin, k, k}, std, seed);
  c.b = Tensor::zeros({cout});
  c.w.ensure_grad();
  c.b.ensure_grad();
  return c;
}

HResNet::BnLayer make_bn(int ch) {
  HResNet::BnLayer bn;
  bn.gamma = Tensor({ch});
  std::fill(bn.gamma.data.begin(), bn.gamma.data.end(), 1.0f);
  bn.beta = Tensor::zeros({ch});
  bn.gamma.ensure_grad();
  bn.beta.ensure_grad();
  bn.running_mean.assign(ch, 0.0f);
  bn.running_var.assign(ch, 1.0f);
  return bn;
}

}  // namespace

HResNet::HResNet(const NetworkSpec& spec, uint64_t init_seed) : spec_(spec) {
  require(spec.n_filters > 0 && spec.kernel % 2 == 1, ErrorCode::precondition,
          "invalid network spec");
  const int f = spec.n_filters, k = spec.kernel;
  conv0_ = make_conv(f, 1, k, spec.init_std, derive_seed(init_seed, "conv0"));
  for (int i = 0; i < spec.n_res_blocks; ++i) {
    Block b;
    b.conv1 = make_conv(f, f, k, spec.init_std,
                        derive_seed(init_seed, "conv1", i));
    b.conv2 = make_conv(f, f, k, spec.init_std,
                        derive_seed(init_seed, "conv2", i));
    b.bn1 = make_bn(f);
    b.bn2 = make_bn(f);
    blocks_.push_back(std::move(b));
  }
  // final conv has exactly one output channel
  conv_final_ =
      make_conv(1, f, k, spec.init_std, derive_seed(init_seed, "final"));
}

Tensor HResNet::forward(const Tensor& x, bool train, Cache* cache) {
  require(x.shape.size() == 4 && x.dim(1) == 1, ErrorCode::precondition,
          "expected (B,1,H,W) input");
  require(!train || cache != nullptr, ErrorCode::precondition,
          "training forward needs a cache");
  const int pad = spec_.kernel / 2;
  const float eps = spec_.bn_eps, mom = spec_.bn_momentum;

  if (cache) {
    cache->x = x;
    cache->blocks.assign(blocks_.size(), {});
  }

  Tensor c0 = nn::conv2d_forward(x, conv0_.w, conv0_.b.data, 1, pad);
  if (cache) cache->c0 = c0;

  Tensor u = c0;
  Tensor j1;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& blk = blocks_[i];
    BlockCache* bc = cache ? &cache->blocks[i] : nullptr;
    if (bc) bc->in = u;
    Tensor a1 = nn::conv2d_forward(u, blk.conv1.w, blk.conv1.b.data, 1, pad);
    Tensor n1;
    if (train)
      n1 = nn::batchnorm_forward_train(a1, blk.bn1.gamma.data,
                                       blk.bn1.beta.data, eps, bc->bn1c,
                                       &blk.bn1.running_mean,
                                       &blk.bn1.running_var, mom);
    else
      n1 = nn::batchnorm_forward_eval(a1, blk.bn1.gamma.data,
                                      blk.bn1.beta.data, blk.bn1.running_mean,
                                      blk.bn1.running_var, eps);
    Tensor h1 = nn::relu_forward(n1);
    if (bc) bc->h1 = h1;
    Tensor a2 = nn::conv2d_forward(h1, blk.conv2.w, blk.conv2.b.data, 1, pad);
    Tensor n2;
    if (train)
      n2 = nn::batchnorm_forward_train(a2, blk.bn2.gamma.data,
                                       blk.bn2.beta.data, eps, bc->bn2c,
                                       &blk.bn2.running_mean,
                                       &blk.bn2.running_var, mom);
    else
      n2 = nn::batchnorm_forward_eval(a2, blk.bn2.gamma.data,
                                      blk.bn2.beta.data, blk.bn2.running_mean,
                                      blk.bn2.running_var, eps);
    nn::add_inplace(n2, u);
    Tensor out = nn::relu_forward(n2);
    if (bc) bc->out = out;
    u = out;

    // level-2 junctions after blocks 2 and 4
    if (i == 1) {
      nn::add_inplace(u, c0);
      u = nn::relu_forward(u);
      j1 = u;
      if (cache) cache->j1 = u;
    } else if (i == 3) {
      nn::add_inplace(u, j1);
      u = nn::relu_forward(u);
      if (cache) cache->j2 = u;
    }
  }

  Tensor y =
      nn::conv2d_forward(u, conv_final_.w, conv_final_.b.data, 1, pad);
  nn::add_inplace(y, x);  // level-1 skip
  return y;
}

namespace {

// Backward through one residual block; returns grad wrt the block input.
Tensor block_backward(HResNet::Block& blk, const HResNet::BlockCache& bc,
                      const Tensor& grad_out, int pad) {
  Tensor g_s = nn::relu_backward(grad_out, bc.out);
  // level-3 skip
  Tensor g_u = g_s;
  auto gb2 = nn::batchnorm_backward(g_s, bc.bn2c, blk.bn2.gamma.data);
  for (std::size_t i = 0; i < gb2.gamma.size(); ++i) {
    blk.bn2.gamma.grad[i] += gb2.gamma[i];
    blk.bn2.beta.grad[i] += gb2.beta[i];
  }
  auto gc2 = nn::conv2d_backward(gb2.x, bc.h1, blk.conv2.w, 1, pad, true);
  for (std::size_t i = 0; i < gc2.w.data.size(); ++i)
    blk.conv2.w.grad[i] += gc2.w.data[i];
  for (std::size_t i = 0; i < gc2.bias.size(); ++i)
    blk.conv2.b.grad[i] += gc2.bias[i];
  Tensor g_n1 = nn::relu_backward(gc2.x, bc.h1);
  auto gb1 = nn::batchnorm_backward(g_n1, bc.bn1c, blk.bn1.gamma.data);
  for (std::size_t i = 0; i < gb1.gamma.size(); ++i) {
    blk.bn1.gamma.grad[i] += gb1.gamma[i];
    blk.bn1.beta.grad[i] += gb1.beta[i];
  }
  auto gc1 = nn::conv2d_backward(gb1.x, bc.in, blk.conv1.w, 1, pad, true);
  for (std::size_t i = 0; i < gc1.w.data.size(); ++i)
    blk.conv1.w.grad[i] += gc1.w.data[i];
  for (std::size_t i = 0; i < gc1.bias.size(); ++i)
    blk.conv1.b.grad[i] += gc1.bias[i];
  nn::add_inplace(gc1.x, g_u);
  return gc1.x;
}

}  // namespace

Tensor HResNet::backward(const Tensor& grad_out, const Cache& cache) {
  const int pad = spec_.kernel / 2;
  require(blocks_.size() == 4 && cache.blocks.size() == 4,
          ErrorCode::precondition, "backward expects the 4-block hierarchy");

  // final conv + level-1 skip
  auto gf = nn::conv2d_backward(grad_out, cache.j2, conv_final_.w, 1, pad,
                                true);
  for (std::size_t i = 0; i < gf.w.data.size(); ++i)
    conv_final_.w.grad[i] += gf.w.data[i];
  for (std::size_t i = 0; i < gf.bias.size(); ++i)
    conv_final_.b.grad[i] += gf.bias[i];

  // junction 2: j2 = relu(block4_out + j1)
  Tensor g_j2 = nn::relu_backward(gf.x, cache.j2);
  Tensor g_j1_acc = g_j2;
  Tensor g = block_backward(blocks_[3], cache.blocks[3], g_j2, pad);
  g = block_backward(blocks_[2], cache.blocks[2], g, pad);
  nn::add_inplace(g_j1_acc, g);

  // junction 1: j1 = relu(block2_out + c0)
  Tensor g_j1 = nn::relu_backward(g_j1_acc, cache.j1);
  Tensor g_c0_acc = g_j1;
  g = block_backward(blocks_[1], cache.blocks[1], g_j1, pad);
  g = block_backward(blocks_[0], cache.blocks[0], g, pad);
  nn::add_inplace(g_c0_acc, g);

  auto g0 = nn::conv2d_backward(g_c0_acc, cache.x, conv0_.w, 1, pad, true);
  for (std::size_t i = 0; i < g0.w.data.size(); ++i)
    conv0_.w.grad[i] += g0.w.data[i];
  for (std::size_t i = 0; i < g0.bias.size(); ++i)
    conv0_.b.grad[i] += g0.bias[i];

  // level-1 skip feeds the output gradient straight back to the input
  nn::add_inplace(g0.x, grad_out);
  return g0.x;
}

std::vector<HResNet::ParamRef> HResNet::parameters() {
  std::vector<ParamRef> out;
  out.push_back({"conv0.w", &conv0_.w});
  out.push_back({"conv0.b", &conv0_.b});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    std::string p = "block" + std::to_string(i) + ".";
    out.push_back({p + "conv1.w", &blocks_[i].conv1.w});
    out.push_back({p + "conv1.b", &blocks_[i].conv1.b});
    out.push_back({p + "bn1.gamma", &blocks_[i].bn1.gamma});
    out.push_back({p + "bn1.beta", &blocks_[i].bn1.beta});
    out.push_back({p + "conv2.w", &blocks_[i].conv2.w});
    out.push_back({p + "conv2.b", &blocks_[i].conv2.b});
    out.push_back({p + "bn2.gamma", &blocks_[i].bn2.gamma});
    out.push_back({p + "bn2.beta", &blocks_[i].bn2.beta});
  }
  out.push_back({"final.w", &conv_final_.w});
  out.push_back({"final.b", &conv_final_.b});
  return out;
}

int64_t HResNet::parameter_count() const {
  int64_t n = 0;
  auto& self = const_cast<HResNet&>(*this);
  for (const auto& p : self.parameters()) n += p.tensor->numel();
  return n;
}

void HResNet::zero_grads() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

void HResNet::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.extra = {{"arch", "hresnet"},
                {"n_filters", spec_.n_filters},
                {"kernel", spec_.kernel},
                {"n_res_blocks", spec_.n_res_blocks},
                {"levels", spec_.levels},
                {"bn_eps", spec_.bn_eps},
                {"bn_momentum", spec_.bn_momentum}};
  auto& self = const_cast<HResNet&>(*this);
  for (const auto& p : self.parameters())
    ckpt.tensors.push_back({p.name, p.tensor->shape, p.tensor->data});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    std::string p = "block" + std::to_string(i) + ".";
    const Block& b = blocks_[i];
    int f = spec_.n_filters;
    ckpt.tensors.push_back({p + "bn1.running_mean", {f}, b.bn1.running_mean});
    ckpt.tensors.push_back({p + "bn1.running_var", {f}, b.bn1.running_var});
    ckpt.tensors.push_back({p + "bn2.running_mean", {f}, b.bn2.running_mean});
    ckpt.tensors.push_back({p + "bn2.running_var", {f}, b.bn2.running_var});
  }
  save_checkpoint(path, ckpt);
}

HResNet HResNet::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  require(ckpt.extra.value("arch", "") == "hresnet",
          ErrorCode::malformed_header, "checkpoint is not an hresnet");
  NetworkSpec spec;
  spec.n_filters = ckpt.extra.at("n_filters").get<int>();
  spec.kernel = ckpt.extra.at("kernel").get<int>();
  spec.n_res_blocks = ckpt.extra.at("n_res_blocks").get<int>();
  spec.levels = ckpt.extra.value("levels", 3);
  spec.bn_eps = ckpt.extra.at("bn_eps").get<float>();
  spec.bn_momentum = ckpt.extra.at("bn_momentum").get<float>();

  HResNet net(spec, 0);
  for (auto& p : net.parameters()) {
    const CkptTensor& t = ckpt.find(p.name);
    require(t.shape == p.tensor->shape, ErrorCode::malformed_header,
            "checkpoint shape mismatch at " + p.name);
    p.tensor->data = t.data;
  }
  for (std::size_t i = 0; i < net.blocks_.size(); ++i) {
    std::string p = "block" + std::to_string(i) + ".";
    Block& b = net.blocks_[i];
    b.bn1.running_mean = ckpt.find(p + "bn1.running_mean").data;
    b.bn1.running_var = ckpt.find(p + "bn1.running_var").data;
    b.bn2.running_mean = ckpt.find(p + "bn2.running_mean").data;
    b.bn2.running_var = ckpt.find(p + "bn2.running_var").data;
  }
  return net;
}

}  // namespace ldmr
