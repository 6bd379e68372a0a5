#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "ream/augmentor.hpp"
#include "ream/corpus.hpp"
#include "ream/embeddings.hpp"
#include "ream/errors.hpp"
#include "ream/metrics.hpp"
#include "ream/model.hpp"
#include "ream/service.hpp"
#include "ream/training.hpp"

namespace py = pybind11;
using namespace ream;

namespace {

metrics::MetricConfig bleu_config(int max_n, bool smoothing) {
  metrics::MetricConfig c;
  c.max_n = max_n;
  c.smoothing = smoothing ? metrics::Smoothing::add_epsilon : metrics::Smoothing::none;
  c.validate();
  return c;
}

py::tuple correlation(const metrics::Correlation& c) { return py::make_tuple(c.value, c.degenerate); }

struct Model {
  std::shared_ptr<const EmbeddingProvider> provider;
  std::shared_ptr<const model::ModelParams> params;
  std::string meta;

  static Model load(const std::string& path) {
    auto ckpt = model::load_checkpoint(path);
    const std::string fp = ckpt.meta.value("provider", "");
    if (!fp.starts_with("hash:"))
      throw ValidationError("checkpoint provider '" + fp + "' cannot be rebuilt from its fingerprint");
    Model m;
    m.provider = std::shared_ptr<const EmbeddingProvider>(make_provider(parse_hash_fingerprint(fp)));
    m.params = std::make_shared<const model::ModelParams>(std::move(ckpt.params));
    m.meta = ckpt.meta.dump();
    if (m.provider->dimension() != m.params->input_dim())
      throw ValidationError("checkpoint dimension does not match its provider");
    return m;
  }

  double predict(const std::string& query, const std::vector<std::string>& refs) const {
    return model::predict(*provider, *params, query, refs);
  }
};

class PyService {
 public:
  explicit PyService(const Model& m, int max_attempts) {
    service::ServiceOptions o;
    o.default_max_attempts = max_attempts;
    svc_ = std::make_unique<service::Service>(m.provider, m.params, std::move(o));
  }

  py::tuple handle(const std::string& method, const std::string& path, const std::string& body) {
    service::Response r;
    {
      py::gil_scoped_release release;
      r = svc_->handle(method, path, body);
    }
    return py::make_tuple(r.status, r.body.dump());
  }

  int start(const std::string& host, int port) {
    py::gil_scoped_release release;
    return svc_->start(host, port);
  }

  void stop() {
    py::gil_scoped_release release;
    svc_->stop();
  }

 private:
  std::unique_ptr<service::Service> svc_;
};

}  // namespace

PYBIND11_MODULE(_ream, m) {
  m.doc() = "Native core of the reference-set reliability toolkit.";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<TransportError>(m, "TransportError", PyExc_ConnectionError);

  m.def("tokenize", [](const std::string& text, const std::string& tokenizer) {
    return Tokenizer::from_name(tokenizer)(text);
  }, py::arg("text"), py::arg("tokenizer") = "whitespace");

  m.def("sentence_bleu",
        [](const Tokens& cand, const Tokens& ref, int max_n, bool smoothing) {
          return metrics::sentence_bleu(cand, ref, bleu_config(max_n, smoothing));
        },
        py::arg("candidate"), py::arg("reference"), py::arg("max_n") = 4,
        py::arg("smoothing") = true);

  m.def("corpus_bleu",
        [](const std::vector<Tokens>& cands, const std::vector<std::vector<Tokens>>& refsets,
           int max_n, bool smoothing) {
          return metrics::corpus_bleu_multi(cands, refsets, bleu_config(max_n, smoothing));
        },
        py::arg("candidates"), py::arg("refsets"), py::arg("max_n") = 4,
        py::arg("smoothing") = true);

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
    return correlation(metrics::pearson(x, y));
  });
  m.def("kendall", [](const std::vector<double>& x, const std::vector<double>& y) {
    return correlation(metrics::kendall(x, y));
  });

  m.def("synth_jsonl",
        [](int queries, int pool, int responses, double noise, std::uint64_t seed,
           std::uint64_t world_seed, double hq_fraction, double hq_spread) {
          SynthConfig c;
          c.num_queries = queries;
          c.pool_size_per_query = pool;
          c.num_model_responses = responses;
          c.noise_std = noise;
          c.seed = seed;
          c.world_seed = world_seed;
          c.high_quality_fraction = hq_fraction;
          c.high_quality_spread = hq_spread;
          std::string out;
          for (const auto& s : synth_generate(c)) out += dump_sample(s) + "\n";
          return out;
        },
        py::arg("queries") = 50, py::arg("pool") = 40, py::arg("responses") = 30,
        py::arg("noise") = 0.1, py::arg("seed") = 0, py::arg("world_seed") = 0,
        py::arg("hq_fraction") = 0.7, py::arg("hq_spread") = 0.0);

  m.def("auto_augment_json",
        [](const std::string& query, const std::vector<std::string>& init,
           const std::vector<std::string>& candidates,
           const std::function<double(const std::string&, const std::vector<std::string>&)>& score,
           std::uint64_t seed) {
          augment::SetScorer scorer = [&](std::string_view q, std::span<const std::string> refs) {
            return score(std::string(q), std::vector<std::string>(refs.begin(), refs.end()));
          };
          return augment::to_json(augment::auto_augment(query, init, candidates, scorer, seed)).dump();
        },
        py::arg("query"), py::arg("init_set"), py::arg("candidates"), py::arg("scorer"),
        py::arg("seed") = 0);

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def("predict", &Model::predict, py::arg("query"), py::arg("references"))
      .def_property_readonly("input_dim", [](const Model& x) { return x.params->input_dim(); })
      .def_property_readonly("hidden_dim", [](const Model& x) { return x.params->hidden_dim(); })
      .def_readonly("meta_json", &Model::meta);

  py::class_<PyService>(m, "Service")
      .def(py::init<const Model&, int>(), py::arg("model"),
           py::arg("max_attempts") = augment::AnnotationSession::kDefaultMaxAttempts)
      .def("handle", &PyService::handle, py::arg("method"), py::arg("path"), py::arg("body") = "")
      .def("start", &PyService::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0)
      .def("stop", &PyService::stop);
}
