// Command-line driver: ingest -> cluster -> sample -> train -> eval, plus
// ad-hoc recommendation, the sampling ablation and a synthetic data generator.

#include "curatornet/baselines.hpp"
#include "curatornet/clustering.hpp"
#include "curatornet/data.hpp"
#include "curatornet/evaluation.hpp"
#include "curatornet/io.hpp"
#include "curatornet/model.hpp"
#include "curatornet/pipeline.hpp"
#include "curatornet/sampling.hpp"
#include "curatornet/synthetic.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace curatornet;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Outputs are written into a hidden sibling directory and moved into place
// only once the command has succeeded, so a failed run leaves nothing behind.
class Staging {
 public:
  explicit Staging(fs::path target) : target_(std::move(target)) {
    fs::create_directories(target_);
    dir_ = target_ / (".staging-" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;
  ~Staging() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }
  const fs::path& target() const { return target_; }

  void commit() {
    std::vector<fs::path> names;
    for (const auto& entry : fs::directory_iterator(dir_)) names.push_back(entry.path().filename());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) fs::rename(dir_ / name, target_ / name);
  }

 private:
  fs::path target_;
  fs::path dir_;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    T value{};
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw UsageError(std::string("bad value '") + item + "' in " + what);
    out.push_back(value);
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

std::string num(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::is_regular_file(path)) throw UsageError("missing input " + path.string() + " (" + hint + ")");
}

// ---- data directory ----------------------------------------------------------

struct DataDir {
  fs::path root;
  fs::path catalog() const { return root / "catalog.bin"; }
  fs::path artists() const { return root / "artists.tsv"; }
  fs::path train() const { return root / "train.tsv"; }
  fs::path test() const { return root / "test.tsv"; }
  fs::path clusters() const { return root / "clusters.bin"; }
  fs::path corpus() const { return root / "corpus"; }
};

Catalog load_catalog(const DataDir& d) {
  require_file(d.catalog(), "run ingest first");
  Catalog catalog = load_embeddings_binary(d.catalog(), 0);
  if (fs::exists(d.artists())) load_artists(d.artists(), catalog);
  return catalog;
}

std::vector<fs::path> catalog_inputs(const DataDir& d) {
  std::vector<fs::path> out{d.catalog()};
  if (fs::exists(d.artists())) out.push_back(d.artists());
  return out;
}

Split load_data_split(const DataDir& d, const Catalog& catalog) {
  require_file(d.train(), "run ingest first");
  require_file(d.test(), "run ingest first");
  return load_split(d.root, catalog);
}

ClusterModel load_clusters(const DataDir& d, const Catalog& catalog) {
  require_file(d.clusters(), "run cluster first");
  return load_cluster_model(d.clusters(), catalog);
}

void write_manifest(const Staging& out, const std::string& command, const std::map<std::string, std::string>& config,
                    const std::vector<fs::path>& inputs) {
  atomic_write_file(out.path(command + "_manifest.txt"), format_run_manifest(command, config, inputs));
}

// ---- shared option groups ------------------------------------------------------

struct TrainFlags {
  std::string model = "curatornet";
  double lambda = 0.0;
  double lr = 1e-4;
  std::size_t batch = 128;
  int epochs = 20;
  int patience = 3;
  std::size_t latent_dim = 200;
  std::size_t visual_dim = 200;
  bool no_visual_bias = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--model", model, "curatornet or vbpr")->check(CLI::IsMember({"curatornet", "vbpr"}));
    cmd->add_option("--lambda", lambda, "L2 regularization weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", batch, "mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", epochs, "maximum epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--patience", patience, "epochs without validation gain before stopping")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--latent-dim", latent_dim, "VBPR latent factors K")->check(CLI::PositiveNumber);
    cmd->add_option("--visual-dim", visual_dim, "VBPR visual factors D")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-visual-bias", no_visual_bias, "VBPR without the beta_vis term");
  }

  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig tc;
    tc.adam.lr = lr;
    tc.lambda = lambda;
    tc.batch_size = batch;
    tc.max_epochs = epochs;
    tc.patience = patience;
    tc.seed = seed;
    return tc;
  }

  VbprConfig vbpr_config(std::uint64_t seed) const {
    VbprConfig vc;
    vc.latent_dim = latent_dim;
    vc.visual_dim = visual_dim;
    vc.visual_bias = !no_visual_bias;
    vc.train = train_config(seed);
    return vc;
  }

  void echo(std::map<std::string, std::string>& cfg) const {
    cfg["model"] = model;
    cfg["lambda"] = num(lambda);
    cfg["lr"] = num(lr);
    cfg["batch"] = std::to_string(batch);
    cfg["epochs"] = std::to_string(epochs);
    cfg["patience"] = std::to_string(patience);
    if (model == "vbpr") {
      cfg["latent_dim"] = std::to_string(latent_dim);
      cfg["visual_dim"] = std::to_string(visual_dim);
      cfg["visual_bias"] = no_visual_bias ? "0" : "1";
    }
  }
};

// Strategies 3 and 6 need artist ids. When the user asked for them explicitly
// that is a configuration error; the default set quietly drops them.
std::vector<int> resolve_strategies(std::vector<int> strategies, bool explicit_flag, const Catalog& catalog) {
  for (int s : strategies)
    if (s < 0 || s > kStrategyCount) throw UsageError("unknown strategy " + std::to_string(s));
  if (catalog.has_artists()) return strategies;
  const bool needs_artist = std::any_of(strategies.begin(), strategies.end(), [](int s) { return s == 3 || s == 6; });
  if (!needs_artist) return strategies;
  if (explicit_flag)
    throw UsageError("strategies 3 and 6 need an artist column; ingest with --artists or drop them from --strategies");
  std::erase_if(strategies, [](int s) { return s == 3 || s == 6; });
  spdlog::warn("catalog has no artist ids; sampling with strategies {}", join(strategies));
  return strategies;
}

// ---- commands --------------------------------------------------------------------

struct IngestArgs {
  fs::path embeddings, transactions, artists;
  std::string data_dir;
  std::size_t dim = kEmbeddingDim;
  bool one_item_baskets = false;
};

int cmd_ingest(const IngestArgs& a) {
  const DataDir d{a.data_dir};
  require_file(a.embeddings, "--embeddings");
  require_file(a.transactions, "--transactions");
  Catalog catalog = load_embeddings(a.embeddings, a.dim);
  std::vector<fs::path> inputs{a.embeddings, a.transactions};
  if (!a.artists.empty()) {
    require_file(a.artists, "--artists");
    load_artists(a.artists, catalog);
    inputs.push_back(a.artists);
  }
  TransactionOptions opts;
  opts.one_item_baskets = a.one_item_baskets;
  const InteractionLog log = load_transactions(a.transactions, catalog, opts);
  const Split split = split_train_test(log);

  Staging out(d.root);
  save_embeddings_binary(catalog, out.path("catalog.bin"));
  if (catalog.has_artists()) save_artists(catalog, out.path("artists.tsv"));
  save_split(split, catalog, out.path(""));
  write_manifest(out, "ingest",
                 {{"dim", std::to_string(catalog.dim())},
                  {"one_item_baskets", a.one_item_baskets ? "1" : "0"},
                  {"items", std::to_string(catalog.size())},
                  {"users", std::to_string(log.user_count())},
                  {"purchases", std::to_string(log.purchase_count())},
                  {"test_users", std::to_string(split.test.size())}},
                 inputs);
  out.commit();
  spdlog::info("ingested {} items, {} users, {} purchases; {} test baskets", catalog.size(), log.user_count(),
               log.purchase_count(), split.test.size());
  return 0;
}

struct ClusterArgs {
  std::string data_dir;
  ClusterConfig config;
};

int cmd_cluster(const ClusterArgs& a) {
  const DataDir d{a.data_dir};
  const Catalog catalog = load_catalog(d);
  const ClusterModel model = build_cluster_model(catalog, a.config);
  Staging out(d.root);
  save_cluster_model(model, catalog, out.path("clusters.bin"));
  atomic_write_file(out.path("clusters.tsv"), format_cluster_assignments(model, catalog));
  atomic_write_file(out.path("projection_2d.tsv"), format_projection_2d(model, catalog));
  write_manifest(out, "cluster",
                 {{"k", std::to_string(a.config.k)},
                  {"pca_dim", std::to_string(a.config.pca_dim)},
                  {"restarts", std::to_string(a.config.restarts)},
                  {"max_iters", std::to_string(a.config.max_iters)},
                  {"seed", std::to_string(a.config.seed)},
                  {"silhouette", num(model.silhouette)},
                  {"selected_restart", std::to_string(model.selected_restart)},
                  {"restart_silhouettes", join(model.restart_silhouettes)}},
                 catalog_inputs(d));
  out.commit();
  spdlog::info("k={} silhouette {:.4f} (restart {})", model.k(), model.silhouette, model.selected_restart);
  return 0;
}

struct SampleArgs {
  std::string data_dir;
  std::string out;
  std::string strategies = "1,2,3,4,5,6";
  bool strategies_given = false;
  std::size_t count = 60'000;
  std::size_t valid_count = 3'000;
  bool paper_scale = false;
  bool skip_singletons = false;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a) {
  const DataDir d{a.data_dir};
  const Catalog catalog = load_catalog(d);
  const Split split = load_data_split(d, catalog);
  const ClusterModel clusters = load_clusters(d, catalog);

  CorpusConfig cc;
  cc.strategies = resolve_strategies(parse_list<int>(a.strategies, "--strategies"), a.strategies_given, catalog);
  cc.train_count = a.paper_scale ? 10'000'000 : a.count;
  cc.valid_count = a.paper_scale ? 300'000 : a.valid_count;
  cc.seed = a.seed;
  SamplerOptions opts;
  opts.skip_singletons = a.skip_singletons;
  const SamplingContext ctx(split.train, catalog, clusters.labels, opts);
  const Corpus corpus = build_training_corpus(ctx, cc);
  for (const auto& w : corpus.manifest.warnings) spdlog::warn("{}", w);

  Staging out(a.out.empty() ? d.corpus() : fs::path(a.out));
  save_triples(corpus.train.triples(), catalog, split.train, out.path("train.trp"));
  save_triples(corpus.valid.triples(), catalog, split.train, out.path("valid.trp"));
  atomic_write_file(out.path("corpus_manifest.tsv"), format_corpus_manifest(corpus.manifest));
  auto inputs = catalog_inputs(d);
  inputs.insert(inputs.end(), {d.train(), d.clusters()});
  write_manifest(out, "sample",
                 {{"strategies", join(cc.strategies)},
                  {"count", std::to_string(cc.train_count)},
                  {"valid_count", std::to_string(cc.valid_count)},
                  {"skip_singletons", a.skip_singletons ? "1" : "0"},
                  {"seed", std::to_string(a.seed)},
                  {"realized_train", std::to_string(corpus.train.size())},
                  {"realized_valid", std::to_string(corpus.valid.size())}},
                 inputs);
  out.commit();
  spdlog::info("sampled {} train and {} validation triples", corpus.train.size(), corpus.valid.size());
  return 0;
}

struct TrainArgs {
  std::string data_dir;
  std::string corpus;
  std::string out;
  std::uint64_t seed = 0;
  TrainFlags flags;
};

void log_history(const TrainHistory& h) {
  spdlog::info("best epoch {} (valid accuracy {:.4f})", h.best_epoch, h.best_valid_accuracy);
}

int cmd_train(const TrainArgs& a) {
  const DataDir d{a.data_dir};
  const Catalog catalog = load_catalog(d);
  const Split split = load_data_split(d, catalog);
  const fs::path corpus_dir = a.corpus.empty() ? d.corpus() : fs::path(a.corpus);
  require_file(corpus_dir / "train.trp", "run sample first");
  const auto train = load_triples(corpus_dir / "train.trp", catalog, split.train);
  std::vector<TrainingTriple> valid;
  if (fs::exists(corpus_dir / "valid.trp")) valid = load_triples(corpus_dir / "valid.trp", catalog, split.train);
  if (train.empty()) throw UsageError("training corpus is empty");

  const ModelKind kind = parse_model_kind(a.flags.model);
  const fs::path target = a.out.empty() ? d.root / (model_kind_name(kind) + ".ckpt") : fs::path(a.out);
  Staging out(target.parent_path().empty() ? fs::path(".") : target.parent_path());
  const std::string file = target.filename().string();
  if (kind == ModelKind::kCuratorNet) {
    Architecture arch;
    arch.input_dim = catalog.dim();
    const TrainConfig tc = a.flags.train_config(a.seed);
    const TrainResult result = train_curatornet(arch, catalog.embeddings(), train, valid, tc);
    log_history(result.history);
    save_checkpoint(result.params, out.path(file), &tc, &result.history);
  } else {
    const VbprConfig vc = a.flags.vbpr_config(a.seed);
    const VbprTrainResult result = vbpr_train(split.train, catalog.embeddings(), train, valid, vc);
    log_history(result.history);
    save_vbpr(result.model, out.path(file), &vc, &result.history);
  }
  std::map<std::string, std::string> cfg{{"seed", std::to_string(a.seed)},
                                         {"train_triples", std::to_string(train.size())},
                                         {"valid_triples", std::to_string(valid.size())},
                                         {"checkpoint", file}};
  a.flags.echo(cfg);
  auto inputs = catalog_inputs(d);
  inputs.insert(inputs.end(), {d.train(), corpus_dir / "train.trp"});
  if (fs::exists(corpus_dir / "valid.trp")) inputs.push_back(corpus_dir / "valid.trp");
  write_manifest(out, target.stem().string() + "_train", cfg, inputs);
  out.commit();
  spdlog::info("wrote {}", target.string());
  return 0;
}

struct EvalArgs {
  std::string data_dir;
  std::vector<std::string> checkpoints;
  std::string baselines;
  std::string topk = "20,100";
  std::string out;
  bool per_user = false;
  std::uint64_t seed = 0;
};

std::string file_label(const std::string& label) {
  std::string s = label;
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

int cmd_eval(const EvalArgs& a) {
  const DataDir d{a.data_dir};
  const Catalog catalog = load_catalog(d);
  const Split split = load_data_split(d, catalog);
  const auto cutoffs = parse_list<std::size_t>(a.topk, "--topk");
  if (std::find(cutoffs.begin(), cutoffs.end(), 0) != cutoffs.end()) throw UsageError("--topk values must be positive");

  std::vector<std::pair<std::string, std::unique_ptr<Recommender>>> methods;
  auto inputs = catalog_inputs(d);
  inputs.insert(inputs.end(), {d.train(), d.test()});
  for (const auto& ckpt : a.checkpoints) {
    require_file(ckpt, "--checkpoint");
    auto rec = load_recommender(ckpt, catalog);
    std::string label = rec->name();
    // Two checkpoints of the same kind are told apart by file name.
    for (const auto& m : methods)
      if (m.first == label) label += ":" + fs::path(ckpt).stem().string();
    methods.emplace_back(label, std::move(rec));
    inputs.push_back(ckpt);
  }
  for (const auto& name : split_names(a.baselines)) {
    auto rec = make_baseline(name, catalog, a.seed);
    methods.emplace_back(rec->name(), std::move(rec));
  }
  if (methods.empty()) throw UsageError("nothing to evaluate: pass --checkpoint and/or --baselines");

  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& [label, rec] : methods) {
    rows.emplace_back(label, evaluate(*rec, split, catalog, cutoffs));
    spdlog::info("{}: AUC {:.4f} over {} users", label, rows.back().second.auc, rows.back().second.users.size());
  }
  const std::string table = format_results_table(rows);
  std::cout << table;

  Staging out(a.out.empty() ? d.root / "eval" : fs::path(a.out));
  std::string report = table + "\n" + std::string(kCandidatePolicy) + "\n";
  atomic_write_file(out.path("report.txt"), report);
  for (const auto& [label, r] : rows) {
    atomic_write_file(out.path(file_label(label) + ".kv"), format_report_kv(r));
    if (a.per_user) atomic_write_file(out.path(file_label(label) + "_per_user.tsv"), format_per_user_tsv(r));
  }
  write_manifest(out, "eval",
                 {{"methods", [&] {
                     std::vector<std::string> names;
                     for (const auto& m : methods) names.push_back(m.first);
                     return join(names);
                   }()},
                  {"topk", join(cutoffs)},
                  {"seed", std::to_string(a.seed)},
                  {"per_user", a.per_user ? "1" : "0"}},
                 inputs);
  out.commit();
  return 0;
}

struct RecommendArgs {
  std::string data_dir;
  std::string checkpoint;
  std::string baseline;
  std::string profile;
  std::string user;
  std::size_t topk = 20;
  bool include_owned = false;
};

int cmd_recommend(const RecommendArgs& a) {
  const DataDir d{a.data_dir};
  const Catalog catalog = load_catalog(d);
  if (a.checkpoint.empty() == a.baseline.empty()) throw UsageError("pass exactly one of --checkpoint or --baseline");
  if (a.profile.empty() == a.user.empty()) throw UsageError("pass exactly one of --profile or --user");
  if (a.topk == 0) throw UsageError("--topk must be positive");

  std::unique_ptr<Recommender> rec =
      a.checkpoint.empty() ? make_baseline(a.baseline, catalog, 0) : load_recommender(a.checkpoint, catalog);

  std::vector<ItemIndex> history;
  std::size_t train_user = 0;
  if (!a.profile.empty()) {
    for (const auto& id : split_names(a.profile)) history.push_back(catalog.index_of(id));
    std::sort(history.begin(), history.end());
    history.erase(std::unique(history.begin(), history.end()), history.end());
  } else {
    const Split split = load_data_split(d, catalog);
    const auto u = split.train.find_user(a.user);
    if (!u) throw UsageError("unknown user " + a.user);
    train_user = *u;
    history = split.train.user(*u).positives;
  }
  const UserQuery query{train_user, a.user, history, {}};
  if (!rec->can_score(query))
    throw UsageError(rec->name() + " cannot score this query" + (a.user.empty() ? " (it needs --user)" : ""));
  const VectorD scores = rec->score_all(query);

  std::vector<ItemIndex> candidates;
  for (ItemIndex i = 0; i < catalog.size(); ++i)
    if (a.include_owned || !std::binary_search(history.begin(), history.end(), i)) candidates.push_back(i);
  const std::size_t k = std::min(a.topk, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                    [&](ItemIndex x, ItemIndex y) {
                      if (scores[x] != scores[y]) return scores[x] > scores[y];
                      return catalog.id(x) < catalog.id(y);
                    });
  std::cout << "rank\titem_id\tscore\n";
  for (std::size_t r = 0; r < k; ++r)
    std::cout << r + 1 << "\t" << catalog.id(candidates[r]) << "\t" << num(scores[candidates[r]]) << "\n";
  return 0;
}

struct AblationArgs {
  std::string data_dir;
  std::string out;
  std::size_t seeds = 3;
  std::uint64_t first_seed = 0;
  std::size_t count = 20'000;
  std::size_t valid_count = 1'000;
  std::string strategies;
  std::string topk = "20,100";
  TrainFlags flags;
};

int cmd_ablation(const AblationArgs& a) {
  const DataDir d{a.data_dir};
  const Catalog catalog = load_catalog(d);
  const Split split = load_data_split(d, catalog);
  const ClusterModel clusters = load_clusters(d, catalog);
  if (a.seeds < 2) throw UsageError("--seeds must be at least 2 for the paired test");

  AblationConfig config;
  config.model = parse_model_kind(a.flags.model);
  config.seeds.clear();
  for (std::size_t s = 0; s < a.seeds; ++s) config.seeds.push_back(a.first_seed + s);
  config.train_count = a.count;
  config.valid_count = a.valid_count;
  config.cutoffs = parse_list<std::size_t>(a.topk, "--topk");
  std::vector<int> guideline = a.strategies.empty()
                                   ? (config.model == ModelKind::kCuratorNet ? std::vector<int>{1, 2, 3, 4, 5, 6}
                                                                             : std::vector<int>{3, 4})
                                   : parse_list<int>(a.strategies, "--strategies");
  if (std::find(guideline.begin(), guideline.end(), 0) != guideline.end())
    throw UsageError("--strategies lists guideline strategies 1..6; the random arm is added automatically");
  config.guideline_strategies = resolve_strategies(guideline, !a.strategies.empty(), catalog);
  if (config.guideline_strategies.empty()) throw UsageError("no usable guideline strategies for this catalog");
  config.train = a.flags.train_config(0);
  config.vbpr = a.flags.vbpr_config(0);

  const AblationResult result = run_ablation(catalog, split, clusters.labels, config);
  const std::string text = format_ablation(result, config);
  std::cout << text;

  Staging out(a.out.empty() ? d.root / "ablation" : fs::path(a.out));
  atomic_write_file(out.path("ablation_" + model_kind_name(config.model) + ".txt"), text);
  std::map<std::string, std::string> cfg{{"seeds", join(config.seeds)},
                                         {"count", std::to_string(a.count)},
                                         {"valid_count", std::to_string(a.valid_count)},
                                         {"strategies", join(config.guideline_strategies)},
                                         {"topk", join(config.cutoffs)}};
  a.flags.echo(cfg);
  auto inputs = catalog_inputs(d);
  inputs.insert(inputs.end(), {d.train(), d.test(), d.clusters()});
  write_manifest(out, "ablation_" + model_kind_name(config.model), cfg, inputs);
  out.commit();
  return 0;
}

struct SynthArgs {
  std::string out;
  SyntheticConfig config;
};

int cmd_synth(const SynthArgs& a) {
  const SyntheticDataset data = make_synthetic(a.config);
  Staging out(a.out);
  write_synthetic(data, out.path(""));
  write_manifest(out, "synth",
                 {{"users", std::to_string(a.config.users)},
                  {"items", std::to_string(a.config.items)},
                  {"styles", std::to_string(a.config.styles)},
                  {"artists", std::to_string(a.config.artists)},
                  {"dim", std::to_string(a.config.dim)},
                  {"seed", std::to_string(a.config.seed)}},
                 {});
  out.commit();
  spdlog::info("wrote {} items and {} users to {}", data.items.size(), data.users.size(), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("curatornet"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Art recommendation from visual embeddings and purchase baskets"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only log warnings and errors");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "validate inputs, build the catalog and the train/test split");
  c_ingest->add_option("--embeddings", ingest.embeddings, "item embeddings (TSV or binary)")->required();
  c_ingest->add_option("--transactions", ingest.transactions, "user_id, item_id, basket rows (TSV)")->required();
  c_ingest->add_option("--artists", ingest.artists, "item_id, artist_id table (TSV with header)");
  c_ingest->add_option("--data-dir", ingest.data_dir, "output directory")->required();
  c_ingest->add_option("--dim", ingest.dim, "embedding dimension, 0 to accept the file's")->capture_default_str();
  c_ingest->add_flag("--one-item-baskets", ingest.one_item_baskets, "treat every transaction row as its own basket");

  ClusterArgs cluster;
  auto* c_cluster = app.add_subcommand("cluster", "PCA + k-means visual clusters");
  c_cluster->add_option("--data-dir", cluster.data_dir)->required();
  c_cluster->add_option("--k", cluster.config.k)->capture_default_str()->check(CLI::PositiveNumber);
  c_cluster->add_option("--pca-dim", cluster.config.pca_dim)->capture_default_str()->check(CLI::PositiveNumber);
  c_cluster->add_option("--restarts", cluster.config.restarts)->capture_default_str()->check(CLI::PositiveNumber);
  c_cluster->add_option("--max-iters", cluster.config.max_iters)->capture_default_str()->check(CLI::PositiveNumber);
  c_cluster->add_option("--seed", cluster.config.seed)->capture_default_str();

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "generate training and validation triples");
  c_sample->add_option("--data-dir", sample.data_dir)->required();
  c_sample->add_option("--out", sample.out, "corpus directory (default <data-dir>/corpus)");
  auto* o_strategies = c_sample->add_option("--strategies", sample.strategies, "comma list of 1..6, or 0 for random negatives")
                           ->capture_default_str();
  c_sample->add_option("--count", sample.count, "training triples")->capture_default_str();
  c_sample->add_option("--valid-count", sample.valid_count, "validation triples")->capture_default_str();
  auto* o_paper = c_sample->add_flag("--paper-scale", sample.paper_scale, "10M training and 300K validation triples");
  c_sample->get_option("--count")->excludes(o_paper);
  c_sample->get_option("--valid-count")->excludes(o_paper);
  c_sample->add_flag("--skip-singletons", sample.skip_singletons, "random sampler drops single-item users");
  c_sample->add_option("--seed", sample.seed)->capture_default_str();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train CuratorNet or VBPR on a triple corpus");
  c_train->add_option("--data-dir", train.data_dir)->required();
  c_train->add_option("--corpus", train.corpus, "corpus directory (default <data-dir>/corpus)");
  c_train->add_option("--out", train.out, "checkpoint path (default <data-dir>/<model>.ckpt)");
  c_train->add_option("--seed", train.seed)->capture_default_str();
  train.flags.add(c_train);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "score held-out baskets: AUC, P@k, R@k, nDCG@k");
  c_eval->add_option("--data-dir", eval.data_dir)->required();
  c_eval->add_option("--checkpoint", eval.checkpoints, "model checkpoint (repeatable)");
  c_eval->add_option("--baselines", eval.baselines, "comma list of visrank, random, oracle");
  c_eval->add_option("--topk", eval.topk)->capture_default_str();
  c_eval->add_option("--out", eval.out, "report directory (default <data-dir>/eval)");
  c_eval->add_flag("--per-user", eval.per_user, "also write per-user metric tables");
  c_eval->add_option("--seed", eval.seed, "seed of the Random baseline")->capture_default_str();

  RecommendArgs recommend;
  auto* c_rec = app.add_subcommand("recommend", "top-k items for a profile or a known user");
  c_rec->add_option("--data-dir", recommend.data_dir)->required();
  c_rec->add_option("--checkpoint", recommend.checkpoint);
  c_rec->add_option("--baseline", recommend.baseline, "visrank, random or oracle");
  c_rec->add_option("--profile", recommend.profile, "comma list of item ids");
  c_rec->add_option("--user", recommend.user, "user id from the train split");
  c_rec->add_option("--topk", recommend.topk)->capture_default_str();
  c_rec->add_flag("--include-owned", recommend.include_owned, "do not filter the profile items out");

  AblationArgs ablation;
  auto* c_abl = app.add_subcommand("ablation", "guideline triples vs random negatives, paired over seeds");
  c_abl->add_option("--data-dir", ablation.data_dir)->required();
  c_abl->add_option("--out", ablation.out, "output directory (default <data-dir>/ablation)");
  c_abl->add_option("--seeds", ablation.seeds, "number of seeds")->capture_default_str();
  c_abl->add_option("--first-seed", ablation.first_seed)->capture_default_str();
  c_abl->add_option("--count", ablation.count)->capture_default_str();
  c_abl->add_option("--valid-count", ablation.valid_count)->capture_default_str();
  c_abl->add_option("--strategies", ablation.strategies, "guideline arm (default 1..6, or 3,4 for vbpr)");
  c_abl->add_option("--topk", ablation.topk)->capture_default_str();
  ablation.flags.add(c_abl);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a planted synthetic dataset");
  c_synth->add_option("--out", synth.out)->required();
  c_synth->add_option("--users", synth.config.users)->capture_default_str();
  c_synth->add_option("--items", synth.config.items)->capture_default_str();
  c_synth->add_option("--styles", synth.config.styles)->capture_default_str();
  c_synth->add_option("--artists", synth.config.artists)->capture_default_str();
  c_synth->add_option("--dim", synth.config.dim)->capture_default_str();
  c_synth->add_option("--seed", synth.config.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);
  sample.strategies_given = o_strategies->count() > 0;

  try {
    if (*c_ingest) return cmd_ingest(ingest);
    if (*c_cluster) return cmd_cluster(cluster);
    if (*c_sample) return cmd_sample(sample);
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_eval(eval);
    if (*c_rec) return cmd_recommend(recommend);
    if (*c_abl) return cmd_ablation(ablation);
    if (*c_synth) return cmd_synth(synth);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
