#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_map>

#include "parallel.hpp"
#include "ream/errors.hpp"
#include "ream/training.hpp"

namespace ream::model {

Labeler metric_labeler(const metrics::Metric& metric) {
  return [&metric](const EvalSample& sample, std::span<const std::string> refs) {
    return metrics::reliability(sample, refs, metric).value;
  };
}

std::vector<ReliabilityExample> label_instances(const Corpus& corpus,
                                                std::span<const RefSetInstance> instances,
                                                const metrics::Metric& metric, int jobs) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_id.emplace(corpus[i].query.id, i);
  std::vector<ReliabilityExample> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto it = by_id.find(instances[i].sample_id);
    if (it == by_id.end())
      throw ValidationError("instance refers to unknown sample '" + instances[i].sample_id + "'");
    instances[i].validate(corpus[it->second]);
    out[i].sample_index = it->second;
    out[i].member_indices = instances[i].member_indices;
  }
  detail::parallel_for(out.size(), jobs, [&](std::size_t i) {
    const EvalSample& s = corpus[out[i].sample_index];
    const auto c = metrics::reliability(s, s.reference_texts(out[i].member_indices), metric);
    out[i].gold_c = c.value;
    out[i].degenerate = c.degenerate;
  });
  return out;
}

std::string to_string(NegativeKind kind) {
  switch (kind) {
    case NegativeKind::remove: return "remove";
    case NegativeKind::add_foreign: return "add_foreign";
    case NegativeKind::replace_foreign: return "replace_foreign";
  }
  return "?";
}

std::vector<std::string> NegativeExample::texts(const EvalSample& parent) const {
  auto out = parent.reference_texts(member_indices);
  if (foreign) out.push_back(foreign->text);
  return out;
}

namespace {

ForeignResponse draw_foreign(const Corpus& corpus, std::size_t own, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 2);
  std::size_t s = pick(rng);
  if (s >= own) ++s;
  const auto& pool = corpus[s].references;
  std::uniform_int_distribution<std::size_t> ref(0, pool.size() - 1);
  const std::size_t r = ref(rng);
  return {s, r, pool[r].text};
}

}  // namespace

std::vector<NegativeExample> make_negatives(const ReliabilityExample& example,
                                            const Corpus& corpus, const NegativeConfig& config,
                                            const Labeler& labeler) {
  if (config.count < 1) throw ValidationError("negatives_per_sample must be >= 1");
  if (corpus.size() < 2) throw ValidationError("negative sampling needs at least two queries");
  if (example.member_indices.empty()) throw ValidationError("example has an empty reference set");
  const EvalSample& parent = corpus.at(example.sample_index);

  std::string stream = parent.query.id;
  for (auto m : example.member_indices) stream += "," + std::to_string(m);
  std::mt19937_64 rng(stable_hash(stream, config.seed));

  const auto& members = example.member_indices;
  auto add_foreign = [&] {
    NegativeExample neg;
    neg.kind = NegativeKind::add_foreign;
    neg.member_indices = members;
    neg.foreign = draw_foreign(corpus, example.sample_index, rng);
    return neg;
  };

  std::vector<NegativeExample> out;
  out.reserve(config.count);
  for (std::size_t t = 0; t < config.count; ++t) {
    const auto kind = static_cast<NegativeKind>(t % 3);
    if (kind == NegativeKind::add_foreign || members.size() < 2) {
      out.push_back(add_foreign());
      continue;
    }
    if (kind == NegativeKind::replace_foreign) {
      NegativeExample neg;
      neg.kind = NegativeKind::replace_foreign;
      std::uniform_int_distribution<std::size_t> pos(0, members.size() - 1);
      const std::size_t drop = pos(rng);
      for (std::size_t i = 0; i < members.size(); ++i)
        if (i != drop) neg.member_indices.push_back(members[i]);
      neg.foreign = draw_foreign(corpus, example.sample_index, rng);
      out.push_back(std::move(neg));
      continue;
    }
    // remove: keep only a removal whose gold correlation deteriorates.
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    bool found = false;
    for (std::size_t drop : order) {
      NegativeExample neg;
      neg.kind = NegativeKind::remove;
      for (std::size_t i = 0; i < members.size(); ++i)
        if (i != drop) neg.member_indices.push_back(members[i]);
      const auto texts = parent.reference_texts(neg.member_indices);
      if (labeler(parent, texts) < example.gold_c) {
        out.push_back(std::move(neg));
        found = true;
        break;
      }
    }
    if (!found) out.push_back(add_foreign());
  }
  return out;
}

void encode_example(ReliabilityExample& example, const Corpus& corpus,
                    const EmbeddingProvider& provider) {
  const EvalSample& s = corpus.at(example.sample_index);
  example.features = encode_set(provider, s.query.text, s.reference_texts(example.member_indices));
}

void encode_negative(NegativeExample& negative, const EvalSample& parent,
                     const EmbeddingProvider& provider) {
  negative.features = encode_set(provider, parent.query.text, negative.texts(parent));
}

std::vector<TrainingItem> build_items(const Corpus& corpus, std::span<const RefSetInstance> instances,
                                      const metrics::Metric& metric,
                                      const EmbeddingProvider& provider,
                                      const DatasetOptions& options) {
  auto examples = label_instances(corpus, instances, metric, options.jobs);
  const Labeler labeler = metric_labeler(metric);
  std::vector<TrainingItem> items(examples.size());
  detail::parallel_for(examples.size(), options.jobs, [&](std::size_t i) {
    auto& ex = examples[i];
    encode_example(ex, corpus, provider);
    TrainingItem& it = items[i];
    it.gold = ex.gold_c;
    it.k = ex.k();
    if (options.with_negatives) {
      for (auto& neg : make_negatives(ex, corpus, options.negatives, labeler)) {
        encode_negative(neg, corpus[ex.sample_index], provider);
        it.negatives.push_back(std::move(neg.features));
      }
    }
    it.positive = std::move(ex.features);
  });
  return items;
}

}  // namespace ream::model
