#include <algorithm>

#include "fse/fisher.hpp"
#include "fse/pixel_model.hpp"
#include "fse/projection.hpp"

namespace fse {

namespace {
constexpr int64_t kBlockMemBytes = 256ll << 20;

int64_t source_dim(const PixelModelT<float>& model, EmbeddingSource source) {
  return source == EmbeddingSource::kFisher ? model.n_params() : model.activation_dim();
}
}  // namespace

std::vector<std::vector<Embedding>> reduce_multi(const ImageDataset& data,
                                                 const PixelModelT<float>& model,
                                                 const std::vector<const SparseProjection*>& projs,
                                                 const ReduceOptions& opt) {
  require(!projs.empty(), "reduce: no projections given");
  require(data.n > 0, "reduce: empty dataset");
  const int64_t n_in = source_dim(model, opt.source);
  for (const SparseProjection* p : projs)
    require(p->n_in() == n_in, "reduce: projection n_in ", p->n_in(), " != ", to_string(opt.source),
            " dim ", n_in);
  const int64_t act_layer =
      opt.activation_layer >= 0 ? opt.activation_layer : model.default_activation_layer();
  if (opt.standardizer) {
    require(opt.source == EmbeddingSource::kFisher, "reduce: standardizer applies to fisher scores only");
    require(opt.standardizer->dim() == n_in, "reduce: standardizer dim ", opt.standardizer->dim(),
            " != score dim ", n_in);
  }

  int64_t S = opt.block_rows;
  if (S <= 0) S = std::clamp<int64_t>(kBlockMemBytes / (n_in * 4), 8, 256);
  S = std::min(S, data.n);

  std::vector<std::vector<Embedding>> out(projs.size());
  for (auto& v : out) v.resize(static_cast<size_t>(data.n));

  std::vector<float> G(static_cast<size_t>(S * n_in));
  std::vector<float> Z(static_cast<size_t>(S) * 1);

  for (int64_t start = 0; start < data.n; start += S) {
    const int64_t rows = std::min(S, data.n - start);
    // per-sample scores/activations are independent; block rows are filled in
    // parallel and the result does not depend on scheduling
#pragma omp parallel for schedule(dynamic)
    for (int64_t r = 0; r < rows; ++r) {
      float* dst = G.data() + r * n_in;
      const Tensor<float> img = single_image<float>(data, start + r);
      if (opt.source == EmbeddingSource::kFisher) {
        fisher_score_into(model, img, dst);
        if (opt.standardizer) opt.standardizer->standardize_into(dst, n_in, dst);
      } else {
        const Tensor<float> act = model.activations(img, act_layer);
        std::copy(act.data(), act.data() + n_in, dst);
      }
    }
    for (size_t k = 0; k < projs.size(); ++k) {
      const int64_t p = projs[k]->p_out();
      Z.resize(static_cast<size_t>(rows * p));
      projs[k]->project_block(G.data(), rows, Z.data());
      for (int64_t r = 0; r < rows; ++r) {
        Embedding& e = out[k][static_cast<size_t>(start + r)];
        e.source = opt.source;
        e.sample_id = start + r;
        e.values.assign(Z.begin() + r * p, Z.begin() + (r + 1) * p);
        require(std::all_of(e.values.begin(), e.values.end(),
                            [](float v) { return std::isfinite(v); }),
                "reduce: non-finite embedding for sample ", start + r);
      }
    }
  }
  return out;
}

std::vector<Embedding> reduce(const ImageDataset& data, const PixelModelT<float>& model,
                              const SparseProjection& proj, const PcaModel* pca,
                              const ReduceOptions& opt) {
  auto multi = reduce_multi(data, model, {&proj}, opt);
  std::vector<Embedding> out = std::move(multi[0]);
  if (pca) {
    require(pca->in_dim == proj.p_out(), "reduce: pca in_dim ", pca->in_dim,
            " != projection p_out ", proj.p_out());
    for (Embedding& e : out) e.values = pca->apply(e.values);
  }
  return out;
}

}  // namespace fse
