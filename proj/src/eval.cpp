#include "uad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "uad/error.hpp"

namespace uad::eval {

double iou(const seg::BinaryMask& a, const seg::BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("iou: mask shapes " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " and " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + " differ");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<SampledPrompt> sample_prompts(const seg::BinaryMask& gt, std::uint64_t seed) {
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < gt.bits.size(); ++i)
    if (gt.bits[i]) support.push_back(i);
  if (support.empty()) throw PromptError("sample_prompts: empty ground-truth mask");

  std::vector<SampledPrompt> out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
  for (int p = 0; p < kPointsPerMask; ++p) {
    const std::size_t k = support[pick(rng)];
    out.push_back({seg::Prompt::point(static_cast<double>(k % gt.width),
                                      static_cast<double>(k / gt.width)),
                   "point"});
  }

  double r0 = static_cast<double>(gt.height), r1 = 0.0;
  double c0 = static_cast<double>(gt.width), c1 = 0.0;
  for (std::size_t k : support) {
    const auto r = static_cast<double>(k / gt.width), c = static_cast<double>(k % gt.width);
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
  }
  // One-pixel-thin masks get a half-pixel margin so the box has area.
  const double cy = 0.5 * (r0 + r1), cx = 0.5 * (c0 + c1);
  const double hh = std::max(0.5, 0.5 * (r1 - r0)), hw = std::max(0.5, 0.5 * (c1 - c0));
  const double ymax = static_cast<double>(gt.height - 1), xmax = static_cast<double>(gt.width - 1);
  for (double s : kBoxScales) {
    out.push_back({seg::Prompt::box(std::max(0.0, cx - s * hw), std::max(0.0, cy - s * hh),
                                    std::min(xmax, cx + s * hw), std::min(ymax, cy + s * hh)),
                   "box"});
  }
  return out;
}

std::uint64_t prompt_seed(std::uint64_t base, std::uint64_t scene_seed, std::size_t mask_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(scene_seed),
                    static_cast<std::uint32_t>(scene_seed >> 32),
                    static_cast<std::uint32_t>(mask_index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

double prompt_iou(const seg::Model& model, const Tensor& clean, const Tensor& adversarial,
                  const seg::Prompt& prompt) {
  return iou(seg::segment(model, clean, prompt).binary,
             seg::segment(model, adversarial, prompt).binary);
}

std::string model_label(const seg::Model& model) {
  return "seed" + std::to_string(model.seed()) + "-d" + std::to_string(model.arch().depth) +
         "-c" + std::to_string(model.arch().channels);
}

namespace {

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd mean_std(std::span<const double> v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

}  // namespace

ModelMetrics aggregate(const std::string& model, std::span<const MaskRow> rows) {
  ModelMetrics m;
  m.model = model;
  std::vector<double> all;
  std::map<std::pair<std::uint64_t, std::size_t>, std::vector<double>> per_mask;
  for (const MaskRow& r : rows) {
    if (r.model != model) continue;
    all.push_back(r.iou);
    per_mask[{r.scene, r.mask}].push_back(r.iou);
    m.asr50 += r.iou < 0.5 ? 1.0 : 0.0;
    m.asr10 += r.iou < 0.1 ? 1.0 : 0.0;
  }
  m.count = all.size();
  if (all.empty()) return m;
  const MeanStd ms = mean_std(all);
  m.miou = ms.mean;
  m.miou_std = ms.std;
  for (const auto& [key, v] : per_mask) m.miou_std_per_mask += mean_std(v).std;
  m.miou_std_per_mask /= static_cast<double>(per_mask.size());
  m.asr50 /= static_cast<double>(all.size());
  m.asr10 /= static_cast<double>(all.size());
  return m;
}

MetricsReport evaluate(std::span<const seg::Model> models,
                       std::span<const seg::SyntheticScene> scenes,
                       std::span<const Tensor> adversarial, std::uint64_t base_seed) {
  if (scenes.size() != adversarial.size()) {
    throw ConfigError("evaluate: " + std::to_string(scenes.size()) + " scenes but " +
                      std::to_string(adversarial.size()) + " adversarial images");
  }
  MetricsReport report;
  for (const seg::Model& model : models) {
    const std::string label = model_label(model);
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const seg::SyntheticScene& scene = scenes[s];
      require_same_shape(scene.image, adversarial[s], "evaluate");
      Tape tape;
      Var clean_feat = tape.constant(model.encode(scene.image));
      Var adv_feat = tape.constant(model.encode(adversarial[s]));
      for (std::size_t m = 0; m < scene.masks.size(); ++m) {
        const auto prompts =
            sample_prompts(scene.masks[m], prompt_seed(base_seed, scene.seed, m));
        for (std::size_t p = 0; p < prompts.size(); ++p) {
          const seg::Prompt& pr = prompts[p].prompt;
          const double v = iou(
              seg::decode_mask(model, clean_feat, seg::encode_prompt(model, pr, clean_feat)).binary,
              seg::decode_mask(model, adv_feat, seg::encode_prompt(model, pr, adv_feat)).binary);
          report.rows.push_back({scene.seed, m, p, prompts[p].kind, label, v});
        }
      }
    }
    report.models.push_back(aggregate(label, report.rows));
  }
  return report;
}

double feature_similarity(const seg::Model& model, const Tensor& a, const Tensor& b) {
  const Tensor fa = model.encode(a), fb = model.encode(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < fa.numel(); ++i) {
    dot += fa[i] * fb[i];
    na += fa[i] * fa[i];
    nb += fb[i] * fb[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateNormError("feature_similarity: zero feature map");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("histogram: need bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  h.values.assign(values.begin(), values.end());
  for (double v : values) {
    const double t = (std::clamp(v, lo, hi) - lo) / (hi - lo);
    h.counts[std::min(bins - 1, static_cast<std::size_t>(t * static_cast<double>(bins)))]++;
    h.mean += v;
  }
  if (!values.empty()) h.mean /= static_cast<double>(values.size());
  return h;
}

SimilarityHistograms feature_similarity_histogram(const seg::Model& source,
                                                  const seg::Model& target,
                                                  std::span<const Tensor> clean,
                                                  std::span<const Tensor> adversarial,
                                                  std::size_t bins) {
  if (clean.size() != adversarial.size()) {
    throw ConfigError("feature_similarity_histogram: image counts differ");
  }
  std::vector<double> src, tgt;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    src.push_back(feature_similarity(source, clean[i], adversarial[i]));
    tgt.push_back(feature_similarity(target, clean[i], adversarial[i]));
  }
  return {histogram(src, bins), histogram(tgt, bins)};
}

double relative_feature_similarity(const seg::Model& model, const Tensor& original,
                                   const Tensor& deformed, const Tensor& adversarial) {
  require_same_shape(original, deformed, "relative_feature_similarity");
  require_same_shape(original, adversarial, "relative_feature_similarity");
  return feature_similarity(model, adversarial, deformed) -
         feature_similarity(model, adversarial, original);
}

}  // namespace uad::eval
