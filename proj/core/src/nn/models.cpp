#include "csiforge/nn/models.hpp"

namespace csiforge::nn {

// ------------------------------------------------------------ RefinerNet

template <typename T>
RefinerBlock<T>::RefinerBlock(const RefinerArch& arch, int index) {
  const std::string p = "block" + std::to_string(index);
  conv1_ = Conv2d<T>(arch.channels(), arch.hidden1, 1, p + ".conv1");
  conv2_ = Conv2d<T>(arch.hidden1, arch.hidden2, 1, p + ".conv2");
  conv3_ = Conv2d<T>(arch.hidden2, arch.channels(), 1, p + ".conv3");
}

template <typename T>
Tensor<T> RefinerBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> y = out_act_.forward(
      conv3_.forward(act2_.forward(conv2_.forward(act1_.forward(conv1_.forward(x))))));
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
  return y;
}

template <typename T>
Tensor<T> RefinerBlock<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx = conv1_.backward(act1_.backward(
      conv2_.backward(act2_.backward(conv3_.backward(out_act_.backward(dy))))));
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
  return dx;
}

template <typename T>
void RefinerBlock<T>::init(InitMode mode, std::mt19937_64& rng) {
  if (mode == InitMode::kZero) {
    conv1_.init_zero();
    conv2_.init_zero();
    conv3_.init_zero();
    return;
  }
  conv1_.init_xavier(rng);
  conv2_.init_xavier(rng);
  conv3_.init_xavier(rng);
  if (mode == InitMode::kResidualZero) conv3_.init_zero();
}

template <typename T>
void RefinerBlock<T>::append_params(ParamList<T>& list) {
  conv1_.append_params(list);
  conv2_.append_params(list);
  conv3_.append_params(list);
}

template <typename T>
RefinerNet<T>::RefinerNet(const RefinerArch& arch) : arch_(arch) {
  CSIFORGE_EXPECT(arch.n_users >= 1 && arch.n_blocks >= 1, "RefinerNet: bad architecture");
  for (int b = 0; b < arch.n_blocks; ++b) blocks_.emplace_back(arch, b);
}

template <typename T>
Tensor<T> RefinerNet<T>::forward(const Tensor<T>& x) {
  CSIFORGE_EXPECT(x.channels == arch_.channels(),
                  "RefinerNet::forward: input must have 2U channels");
  Tensor<T> h = x;
  for (auto& b : blocks_) h = b.forward(h);
  forwarded_ = true;
  return h;
}

template <typename T>
Tensor<T> RefinerNet<T>::backward(const Tensor<T>& dy) {
  CSIFORGE_EXPECT(forwarded_, "RefinerNet::backward called without forward");
  Tensor<T> g = dy;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  return g;
}

template <typename T>
void RefinerNet<T>::init(InitMode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& b : blocks_) b.init(mode, rng);
}

template <typename T>
ParamList<T> RefinerNet<T>::params() {
  ParamList<T> list;
  for (auto& b : blocks_) b.append_params(list);
  return list;
}

std::size_t refiner_param_count(const RefinerArch& arch) {
  const std::size_t c = arch.channels();
  const std::size_t h1 = arch.hidden1, h2 = arch.hidden2;
  const std::size_t per_block = (c * h1 * 9 + h1) + (h1 * h2 * 9 + h2) + (h2 * c * 9 + c);
  return per_block * arch.n_blocks;
}

// ------------------------------------------------------------- EncDecNet

template <typename T>
EncDecNet<T>::EncDecNet(const EncDecArch& arch) : arch_(arch) {
  arch_.refiner.n_users = 1;
  CSIFORGE_EXPECT(arch.feedback_bits >= 1, "EncDecNet: feedback_bits must be >= 1");
  int c = 2, h = arch.n_tx, w = arch.n_subcarriers;
  for (std::size_t i = 0; i < arch.encoder_widths.size(); ++i) {
    const int stride = (i % 2 == 1) ? 2 : 1;
    convs_.emplace_back(c, arch.encoder_widths[i], stride, "enc.conv" + std::to_string(i));
    acts_.emplace_back();
    c = arch.encoder_widths[i];
    h = Conv2d<T>::out_extent(h, stride);
    w = Conv2d<T>::out_extent(w, stride);
  }
  enc_c_ = c;
  enc_h_ = h;
  enc_w_ = w;
  to_bits_ = Dense<T>(c * h * w, arch.feedback_bits, "enc.dense");
  from_bits_ = Dense<T>(arch.feedback_bits, 2 * arch.n_tx * arch.n_subcarriers, "dec.dense");
  refiner_ = RefinerNet<T>(arch_.refiner);
}

template <typename T>
Tensor<T> EncDecNet<T>::forward(const Tensor<T>& x) {
  CSIFORGE_EXPECT(x.channels == 2 && x.height == arch_.n_tx && x.width == arch_.n_subcarriers,
                  "EncDecNet::forward: expected (2, N, N_t, K)");
  const Tensor<T>* h = &x;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = &acts_[i].forward(convs_[i].forward(*h));
  bits_ = ste_.forward(to_bits_.forward(flatten(*h)));
  Tensor<T> coarse = unflatten(from_bits_.forward(bits_), 2, arch_.n_tx, arch_.n_subcarriers);
  return refiner_.forward(coarse);
}

template <typename T>
void EncDecNet<T>::backward(const Tensor<T>& dy) {
  Tensor<T> g = refiner_.backward(dy);
  g = from_bits_.backward(flatten(g));
  g = to_bits_.backward(ste_.backward(g));
  g = unflatten(g, enc_c_, enc_h_, enc_w_);
  for (std::size_t i = convs_.size(); i-- > 0;) g = convs_[i].backward(acts_[i].backward(std::move(g)));
}

template <typename T>
void EncDecNet<T>::init(InitMode refiner_mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& c : convs_) c.init_xavier(rng);
  to_bits_.init_xavier(rng);
  from_bits_.init_xavier(rng);
  refiner_.init(refiner_mode, child_seed(seed, 1));
}

template <typename T>
ParamList<T> EncDecNet<T>::params() {
  ParamList<T> list;
  for (auto& c : convs_) c.append_params(list);
  to_bits_.append_params(list);
  from_bits_.append_params(list);
  for (auto* p : refiner_.params()) list.push_back(p);
  return list;
}

template class RefinerBlock<float>;
template class RefinerBlock<double>;
template class RefinerNet<float>;
template class RefinerNet<double>;
template class EncDecNet<float>;
template class EncDecNet<double>;

}  // namespace csiforge::nn
