#include "curatornet/baselines.hpp"
#include "curatornet/clustering.hpp"
#include "curatornet/data.hpp"
#include "curatornet/evaluation.hpp"
#include "curatornet/io.hpp"
#include "curatornet/model.hpp"
#include "curatornet/pipeline.hpp"
#include "curatornet/sampling.hpp"
#include "curatornet/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace curatornet;

namespace {

std::vector<ItemIndex> indices_of(const Catalog& catalog, const std::vector<std::string>& ids) {
  std::vector<ItemIndex> out;
  for (const auto& id : ids) out.push_back(catalog.index_of(id));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MatrixD rows_of(const Catalog& catalog, const std::vector<ItemIndex>& items) {
  MatrixD out(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(catalog.dim()));
  for (std::size_t r = 0; r < items.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = catalog.embedding(items[r]).cast<double>();
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["method"] = r.method;
  d["users"] = r.users.size();
  d["test_users"] = r.test_users;
  d["skipped_degenerate"] = r.skipped_degenerate;
  d["unscorable"] = r.unscorable;
  d["auc"] = r.auc;
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) {
    const std::string k = std::to_string(r.cutoffs[c]);
    d[("precision@" + k).c_str()] = r.precision[c];
    d[("recall@" + k).c_str()] = r.recall[c];
    d[("ndcg@" + k).c_str()] = r.ndcg[c];
  }
  return d;
}

py::tuple triple_tuple(const TrainingTriple& t) {
  return py::make_tuple(t.profile, t.positive, t.negative, static_cast<int>(t.strategy), t.user);
}

}  // namespace

PYBIND11_MODULE(_curatornet, m) {
  m.doc() = "Art recommendation from visual embeddings and purchase baskets";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Catalog>(m, "Catalog")
      .def(py::init([](const std::vector<std::string>& ids, const Matrix& embeddings) {
             if (ids.size() != static_cast<std::size_t>(embeddings.rows()))
               throw std::invalid_argument("Catalog: one id per embedding row");
             std::vector<ItemRecord> records;
             for (std::size_t i = 0; i < ids.size(); ++i)
               records.push_back({ids[i], embeddings.row(static_cast<Eigen::Index>(i)).transpose(), std::nullopt});
             return Catalog(std::move(records), static_cast<std::size_t>(embeddings.cols()));
           }),
           py::arg("ids"), py::arg("embeddings"))
      .def("__len__", &Catalog::size)
      .def_property_readonly("dim", &Catalog::dim)
      .def_property_readonly("ids", &Catalog::ids)
      .def_property_readonly("embeddings", &Catalog::embeddings)
      .def_property_readonly("has_artists", &Catalog::has_artists)
      .def("index_of", &Catalog::index_of)
      .def("set_artists", &Catalog::set_artists);

  m.def("load_embeddings", &load_embeddings, py::arg("path"), py::arg("expected_dim") = kEmbeddingDim);
  m.def("load_artists", &load_artists, py::arg("path"), py::arg("catalog"));

  py::class_<InteractionLog>(m, "InteractionLog")
      .def_property_readonly("user_count", &InteractionLog::user_count)
      .def("basket_count", &InteractionLog::basket_count)
      .def("purchase_count", &InteractionLog::purchase_count)
      .def("user_ids", [](const InteractionLog& log) {
        std::vector<std::string> out;
        for (const auto& u : log.users()) out.push_back(u.user_id);
        return out;
      })
      .def("positives", [](const InteractionLog& log, const std::string& user) {
        const auto u = log.find_user(user);
        if (!u) throw py::key_error(user);
        return log.user(*u).positives;
      });

  m.def("parse_transactions",
        [](const std::string& text, const Catalog& catalog, bool one_item_baskets) {
          return parse_transactions(text, catalog, TransactionOptions{one_item_baskets});
        },
        py::arg("text"), py::arg("catalog"), py::arg("one_item_baskets") = false);
  m.def("load_transactions",
        [](const std::filesystem::path& path, const Catalog& catalog, bool one_item_baskets) {
          return load_transactions(path, catalog, TransactionOptions{one_item_baskets});
        },
        py::arg("path"), py::arg("catalog"), py::arg("one_item_baskets") = false);

  py::class_<Split>(m, "Split")
      .def_readonly("train", &Split::train)
      .def_property_readonly("test_users", [](const Split& s) { return s.test.size(); })
      .def("test_baskets", [](const Split& s) {
        std::vector<std::pair<std::string, std::vector<ItemIndex>>> out;
        for (const auto& t : s.test) out.emplace_back(t.user_id, t.items);
        return out;
      });
  m.def("split_train_test", &split_train_test, py::arg("log"));

  py::class_<SyntheticDataset>(m, "SyntheticDataset")
      .def("catalog", &SyntheticDataset::catalog)
      .def("log", &SyntheticDataset::log)
      .def_readonly("item_style", &SyntheticDataset::item_style);
  m.def("make_synthetic",
        [](std::size_t users, std::size_t items, std::size_t styles, std::size_t artists, std::size_t dim,
           std::uint64_t seed) {
          SyntheticConfig c;
          c.users = users;
          c.items = items;
          c.styles = styles;
          c.artists = artists;
          c.dim = dim;
          c.seed = seed;
          return make_synthetic(c);
        },
        py::arg("users") = 300, py::arg("items") = 1000, py::arg("styles") = 10, py::arg("artists") = 100,
        py::arg("dim") = 64, py::arg("seed") = 0);

  py::class_<ClusterModel>(m, "ClusterModel")
      .def_property_readonly("k", &ClusterModel::k)
      .def_readonly("labels", &ClusterModel::labels)
      .def_readonly("silhouette", &ClusterModel::silhouette)
      .def_readonly("restart_silhouettes", &ClusterModel::restart_silhouettes)
      .def_readonly("selected_restart", &ClusterModel::selected_restart);
  m.def("build_cluster_model",
        [](const Catalog& catalog, int k, int pca_dim, int restarts, std::uint64_t seed) {
          ClusterConfig c;
          c.k = k;
          c.pca_dim = pca_dim;
          c.restarts = restarts;
          c.seed = seed;
          return build_cluster_model(catalog, c);
        },
        py::arg("catalog"), py::arg("k") = 100, py::arg("pca_dim") = 200, py::arg("restarts") = 20,
        py::arg("seed") = 0);
  m.def("silhouette", [](const MatrixD& points, const std::vector<int>& labels) { return silhouette(points, labels); },
        py::arg("points"), py::arg("labels"));

  // Triples cross the boundary as (profile, positive, negative, strategy, user) tuples.
  m.def("build_training_corpus",
        [](const Catalog& catalog, const Split& split, const std::vector<std::int32_t>& labels,
           const std::vector<int>& strategies, std::size_t train_count, std::size_t valid_count, std::uint64_t seed) {
          const SamplingContext ctx(split.train, catalog, labels);
          CorpusConfig cc;
          cc.strategies = strategies;
          cc.train_count = train_count;
          cc.valid_count = valid_count;
          cc.seed = seed;
          const Corpus corpus = build_training_corpus(ctx, cc);
          py::list train, valid;
          std::vector<std::string> violations;
          for (const auto& t : corpus.train.triples()) {
            train.append(triple_tuple(t));
            if (auto v = validate_triple(t, ctx)) violations.push_back(*v);
          }
          for (const auto& t : corpus.valid.triples()) {
            valid.append(triple_tuple(t));
            if (auto v = validate_triple(t, ctx)) violations.push_back(*v);
          }
          py::dict out;
          out["train"] = train;
          out["valid"] = valid;
          out["violations"] = violations;
          out["warnings"] = corpus.manifest.warnings;
          return out;
        },
        py::arg("catalog"), py::arg("split"), py::arg("cluster_labels"),
        py::arg("strategies") = std::vector<int>{1, 2, 3, 4, 5, 6}, py::arg("train_count") = 60'000,
        py::arg("valid_count") = 3'000, py::arg("seed") = 0);

  py::class_<ModelParams>(m, "ModelParams")
      .def_property_readonly("parameter_count", &ModelParams::parameter_count)
      .def_property_readonly("input_dim", [](const ModelParams& p) { return p.arch.input_dim; })
      .def("tensors", [](const ModelParams& p) {
        py::dict out;
        p.for_each_tensor([&](const std::string& name, const auto& t) {
          out[name.c_str()] = Matrix(Eigen::Map<const Matrix>(t.data(), t.rows(), t.cols()));
        });
        return out;
      });

  m.def("init_params",
        [](std::size_t input_dim, std::uint64_t seed) {
          Architecture arch;
          arch.input_dim = input_dim;
          return init_params(arch, seed);
        },
        py::arg("input_dim") = kEmbeddingDim, py::arg("seed") = 0);
  m.def("embed_profile",
        [](const ModelParams& p, const MatrixD& profile) { return embed_profile(p.cast<double>(), profile); },
        py::arg("params"), py::arg("profile_features"));
  m.def("score",
        [](const ModelParams& p, const MatrixD& profile, const VectorD& item) {
          return score(p.cast<double>(), profile, item);
        },
        py::arg("params"), py::arg("profile_features"), py::arg("item_features"));

  m.def("train_curatornet",
        [](const Catalog& catalog, const Split& split, const std::vector<std::int32_t>& labels,
           const std::vector<int>& strategies, std::size_t train_count, std::size_t valid_count, double lr,
           double lambda, int epochs, int patience, std::size_t batch, std::uint64_t seed) {
          const SamplingContext ctx(split.train, catalog, labels);
          CorpusConfig cc;
          cc.strategies = strategies;
          cc.train_count = train_count;
          cc.valid_count = valid_count;
          cc.seed = derive_seed(seed, 0xC0);
          const Corpus corpus = build_training_corpus(ctx, cc);
          TrainConfig tc;
          tc.adam.lr = lr;
          tc.lambda = lambda;
          tc.max_epochs = epochs;
          tc.patience = patience;
          tc.batch_size = batch;
          tc.seed = seed;
          Architecture arch;
          arch.input_dim = catalog.dim();
          py::gil_scoped_release release;
          return train_curatornet(arch, catalog.embeddings(), corpus.train.triples(), corpus.valid.triples(), tc).params;
        },
        py::arg("catalog"), py::arg("split"), py::arg("cluster_labels"),
        py::arg("strategies") = std::vector<int>{1, 2, 3, 4, 5, 6}, py::arg("train_count") = 20'000,
        py::arg("valid_count") = 1'000, py::arg("lr") = 1e-4, py::arg("lambda_") = 0.0, py::arg("epochs") = 20,
        py::arg("patience") = 3, py::arg("batch") = 128, py::arg("seed") = 0);

  m.def("save_checkpoint", [](const ModelParams& p, const std::filesystem::path& path) { save_checkpoint(p, path); },
        py::arg("params"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("encode_checkpoint", [](const ModelParams& p) { return py::bytes(encode_checkpoint(p)); }, py::arg("params"));

  py::class_<Recommender, std::shared_ptr<Recommender>>(m, "Recommender")
      .def_property_readonly("name", &Recommender::name);
  m.def("curatornet_recommender",
        [](const ModelParams& p, const Catalog& c) -> std::shared_ptr<Recommender> {
          return std::make_shared<CuratorNetRecommender>(p, c.embeddings());
        },
        py::arg("params"), py::arg("catalog"));
  m.def("baseline",
        [](const std::string& name, const Catalog& c, std::uint64_t seed) -> std::shared_ptr<Recommender> {
          return make_baseline(name, c, seed);
        },
        py::arg("name"), py::arg("catalog"), py::arg("seed") = 0);
  m.def("load_recommender",
        [](const std::filesystem::path& path, const Catalog& c) -> std::shared_ptr<Recommender> {
          return load_recommender(path, c);
        },
        py::arg("checkpoint"), py::arg("catalog"));

  m.def("recommend",
        [](const Recommender& rec, const Catalog& catalog, const std::vector<std::string>& profile, std::size_t k) {
          if (k == 0) throw std::invalid_argument("k must be positive");
          const auto history = indices_of(catalog, profile);
          const UserQuery query{0, {}, history, {}};
          if (!rec.can_score(query)) throw std::invalid_argument(rec.name() + " cannot score an anonymous profile");
          const VectorD scores = rec.score_all(query);
          std::vector<ItemIndex> cand;
          for (ItemIndex i = 0; i < catalog.size(); ++i)
            if (!std::binary_search(history.begin(), history.end(), i)) cand.push_back(i);
          const std::size_t n = std::min(k, cand.size());
          std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(n), cand.end(),
                            [&](ItemIndex a, ItemIndex b) {
                              if (scores[a] != scores[b]) return scores[a] > scores[b];
                              return catalog.id(a) < catalog.id(b);
                            });
          std::vector<std::pair<std::string, double>> out;
          for (std::size_t r = 0; r < n; ++r) out.emplace_back(catalog.id(cand[r]), scores[cand[r]]);
          return out;
        },
        py::arg("recommender"), py::arg("catalog"), py::arg("profile"), py::arg("k") = 20);

  m.def("evaluate",
        [](const Recommender& rec, const Split& split, const Catalog& catalog, const std::vector<std::size_t>& cutoffs) {
          EvalReport r;
          {
            py::gil_scoped_release release;
            r = evaluate(rec, split, catalog, cutoffs);
          }
          return report_dict(r);
        },
        py::arg("recommender"), py::arg("split"), py::arg("catalog"), py::arg("cutoffs") = kDefaultCutoffs);

  m.def("auc", [](const std::vector<double>& rel, const std::vector<double>& non) { return auc(rel, non); },
        py::arg("relevant_scores"), py::arg("nonrelevant_scores"));
  m.def("precision_recall_at_k",
        [](const std::vector<ItemIndex>& ranked, const std::vector<ItemIndex>& relevant, std::size_t k) {
          const auto pr = precision_recall_at_k(ranked, relevant, k);
          return py::make_tuple(pr.precision, pr.recall);
        },
        py::arg("ranked"), py::arg("relevant"), py::arg("k"));
  m.def("ndcg_at_k",
        [](const std::vector<ItemIndex>& ranked, const std::vector<ItemIndex>& relevant, std::size_t k) {
          return ndcg_at_k(ranked, relevant, k);
        },
        py::arg("ranked"), py::arg("relevant"), py::arg("k"));
  m.def("paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          const auto t = paired_t_test(a, b);
          py::dict d;
          d["n"] = t.n;
          d["mean_difference"] = t.mean_difference;
          d["t_statistic"] = t.t_statistic;
          d["p_value"] = t.p_value;
          return d;
        },
        py::arg("a"), py::arg("b"));
  m.def("profile_features", [](const Catalog& c, const std::vector<std::string>& ids) { return rows_of(c, indices_of(c, ids)); },
        py::arg("catalog"), py::arg("item_ids"));
}
