#include "plantrec/app.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plantrec/dataset.hpp"
#include "plantrec/evaluation.hpp"
#include "plantrec/io.hpp"
#include "plantrec/metrics.hpp"
#include "plantrec/pcenc.hpp"
#include "plantrec/pipeline.hpp"
#include "plantrec/procgen.hpp"
#include "plantrec/rvnn.hpp"

#ifndef PLANTREC_SOURCE_VERSION
#define PLANTREC_SOURCE_VERSION "unknown"
#endif

namespace plantrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log_line(const std::string& s) { std::cerr << s << '\n' << std::flush; }

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

// Global settings plus those of the subcommand that ran, in the format --config reads.
std::string resolved_config(const CLI::App& app, const std::string& command) {
  std::string prefix = command;
  std::replace(prefix.begin(), prefix.end(), ' ', '.');
  prefix += '.';
  std::istringstream in(app.config_to_str(true, false));
  std::string out, line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    const bool global = eq != std::string::npos && line.substr(0, eq).find('.') == std::string::npos;
    if (global || line.rfind(prefix, 0) == 0) out += line + '\n';
  }
  return out;
}

void write_manifest(const fs::path& path, const CLI::App& app, const std::string& command, json extra = {}) {
  json j;
  j["command"] = command;
  j["version"] = std::string(kVersion);
  j["source"] = PLANTREC_SOURCE_VERSION;
  j["config"] = resolved_config(app, command);
  if (!extra.is_null()) j["results"] = std::move(extra);
  write_text(path, j.dump(1) + "\n");
}

fs::path file_manifest(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

std::vector<AxialBinaryTree> split_trees(const Dataset& ds, Split s) {
  std::vector<AxialBinaryTree> out;
  for (const auto* r : ds.split(s)) out.push_back(to_binary_tree(ds.lstring(*r)));
  return out;
}

std::vector<PcEncSample> split_samples(const Dataset& ds, Split s, const RvnnModel& m) {
  std::vector<PcEncSample> out;
  for (const auto* r : ds.split(s)) {
    std::vector<PointCloud> depth;
    for (std::size_t v = 0; v < r->depth.size(); ++v) depth.push_back(ds.cloud(*r, CloudVariant::Depth, v));
    out.push_back(make_pcenc_sample(m, ds.lstring(*r), ds.cloud(*r, CloudVariant::Clean), std::move(depth)));
  }
  return out;
}

NormalizationTransform normalization_of(const std::vector<PcEncSample>& samples) {
  std::vector<const PointCloud*> clouds;
  for (const auto& s : samples) clouds.push_back(&s.clean);
  return fit_cloud_normalization(clouds);
}

struct DecodeAccuracy {
  double clean = 0.0;
  double noisy = 0.0;
};

double decode_accuracy(const Dataset& ds, Split s, CloudVariant v, const PcEncoder& e, const RvnnModel& m) {
  const auto recs = ds.split(s);
  if (recs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto* r : recs) {
    try {
      ok += same_topology(infer(ds.cloud(*r, v), e, m).tree, to_binary_tree(ds.lstring(*r))) ? 1 : 0;
    } catch (const DecodeBudgetError&) {
    }
  }
  return static_cast<double>(ok) / static_cast<double>(recs.size());
}

// ---------------------------------------------------------------------------
// Subcommand settings

struct GenerateArgs {
  fs::path out;
  DatasetConfig cfg;
};

struct TrainRvnnArgs {
  fs::path data, out;
  RvnnTrainConfig cfg;
};

struct TrainEncoderArgs {
  fs::path data, rvnn, out;
  PcEncTrainConfig cfg;
};

struct InferArgs {
  fs::path cloud, rvnn, pcenc, out;
  bool refine = false;
  RefineOptions refine_options;
};

struct PathPair {
  fs::path in, out;
};

struct SegmentArgs {
  fs::path lstring, cloud, out;
  SegmentOptions options;
};

struct EvalReconArgs {
  fs::path pred, gt, out;
  ReconOptions options;
};

struct EvalFilesArgs {
  fs::path pred, gt;
};

struct EvalDatasetArgs {
  fs::path data, rvnn, pcenc, out;
  std::string split = "test";
  std::vector<std::string> variants = {"clean", "noisy", "depth"};
  std::size_t limit = 0;
  bool refine = true;
  EvalOptions options;
};

struct SmokeArgs {
  SmokeOptions options;
};

// ---------------------------------------------------------------------------
// Runners

void run_generate(const CLI::App& app, GenerateArgs a) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = build_dataset(a.cfg, a.out);
  write_manifest(a.out / "run.json", app, "generate", {{"records", ds.records.size()}});
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_line("generated " + std::to_string(ds.records.size()) + " records in " + std::to_string(dt) + " s");
}

void run_train_rvnn(const CLI::App& app, TrainRvnnArgs a) {
  const Dataset ds = load_dataset(a.data);
  const auto train = split_trees(ds, Split::Train);
  const auto val = split_trees(ds, Split::Val);
  const auto test = split_trees(ds, Split::Test);
  fs::create_directories(a.out);
  std::ostringstream log;
  log << "epoch,lr,train_loss,val_loss,val_topology_accuracy,val_scaled_mse,best\n";
  const auto result = train_rvnn(train, val, a.cfg, [&](const RvnnEpochLog& l, const RvnnModel& best) {
    log << l.epoch << ',' << l.lr << ',' << l.train_loss << ',' << l.val.loss << ',' << l.val.topology_accuracy
        << ',' << l.val.scaled_mse << ',' << (l.best ? 1 : 0) << '\n';
    if (l.best) save_rvnn(a.out / "rvnn.ckpt", best);
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d lr %.2e train %.4f val loss %.4f acc %.3f mse %.5f%s", l.epoch, l.lr,
                  l.train_loss, l.val.loss, l.val.topology_accuracy, l.val.scaled_mse, l.best ? " *" : "");
    log_line(buf);
  });
  save_rvnn(a.out / "rvnn.ckpt", result.model);
  write_text(a.out / "log.csv", log.str());
  const AutoencoderStats st = evaluate_autoencoder(result.model, test.empty() ? val : test);
  json res = {{"best_epoch", result.best_epoch},
              {"test_topology_accuracy", st.topology_accuracy},
              {"test_scaled_mse", st.scaled_mse},
              {"test_loss", st.loss}};
  write_manifest(a.out / "run.json", app, "train-rvnn", res);
  log_line("test topology accuracy " + std::to_string(st.topology_accuracy) + ", scaled mse " +
           std::to_string(st.scaled_mse));
}

void run_train_encoder(const CLI::App& app, TrainEncoderArgs a) {
  const Dataset ds = load_dataset(a.data);
  const RvnnModel m = load_rvnn(a.rvnn);
  const auto train = split_samples(ds, Split::Train, m);
  const auto val = split_samples(ds, Split::Val, m);
  const NormalizationTransform norm = normalization_of(train);
  const std::uint64_t hash = checkpoint_hash(rvnn_tensors(m));
  fs::create_directories(a.out);
  std::ostringstream log;
  log << "epoch,lr,train_loss,val_loss,best\n";
  const auto result = train_pcenc(train, val, norm, hash, a.cfg, [&](const PcEncEpochLog& l, const PcEncoder& best) {
    log << l.epoch << ',' << l.lr << ',' << l.train_loss << ',' << l.val_loss << ',' << (l.best ? 1 : 0) << '\n';
    if (l.best) save_pcenc(a.out / "pcenc.ckpt", best);
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d lr %.2e train %.5f val %.5f%s", l.epoch, l.lr, l.train_loss,
                  l.val_loss, l.best ? " *" : "");
    log_line(buf);
  });
  save_pcenc(a.out / "pcenc.ckpt", result.model);
  write_text(a.out / "log.csv", log.str());
  const double clean = decode_accuracy(ds, Split::Test, CloudVariant::Clean, result.model, m);
  const double noisy = decode_accuracy(ds, Split::Test, CloudVariant::Noisy, result.model, m);
  write_manifest(a.out / "run.json", app, "train-encoder",
                 {{"best_epoch", result.best_epoch}, {"test_topology_clean", clean}, {"test_topology_noisy", noisy}});
  log_line("test topology accuracy clean " + std::to_string(clean) + ", noisy " + std::to_string(noisy));
}

void run_infer(const CLI::App& app, InferArgs a) {
  const PointCloud cloud = read_ply(a.cloud);
  const RvnnModel m = load_rvnn(a.rvnn);
  const PcEncoder e = load_pcenc(a.pcenc);
  InferResult r = infer(cloud, e, m);
  for (const auto& rep : r.repairs) log_line("warning: decode repair: " + rep);
  LString out = r.lstring;
  json res = {{"repairs", r.repairs}, {"topology", topology_signature(r.tree)}};
  if (a.refine) {
    RefineReport rep;
    out = refine(out, cloud, a.refine_options, &rep);
    res["refine_accepted_steps"] = rep.accepted.size();
    res["stage1"] = {rep.stage1_initial, rep.stage1_final};
    res["stage2"] = {rep.stage2_initial, rep.stage2_final};
  }
  write_lstring(a.out, out);
  write_manifest(file_manifest(a.out), app, "infer", res);
}

void run_reconstruct(const CLI::App& app, PathPair a) {
  const TriangleMesh mesh = reconstruct(read_lstring(a.in));
  write_obj(a.out, mesh);
  write_manifest(file_manifest(a.out), app, "reconstruct", {{"components", connected_components(mesh)}});
}

void run_skeleton(const CLI::App& app, PathPair a) {
  const Skeleton s = extract_skeleton(read_lstring(a.in));
  write_skeleton(a.out, s);
  write_manifest(file_manifest(a.out), app, "skeleton", {{"vertices", s.vertices.size()}});
}

void run_segment(const CLI::App& app, SegmentArgs a) {
  PointCloud cloud = read_ply(a.cloud);
  const SegmentationResult seg = segment(read_lstring(a.lstring), cloud, a.options);
  cloud.labels = seg.labels;
  cloud.instances = seg.instances;
  write_ply(a.out, cloud);
  write_manifest(file_manifest(a.out), app, "segment", {{"points", cloud.size()}});
}

void print_recon(const ReconReport& r) {
  std::printf("accuracy %.9g\ncompleteness %.9g\nhausdorff %.9g\nsilhouette %.9g\ncomponents %zu\n", r.accuracy,
              r.completeness, r.hausdorff, r.silhouette, r.components);
}

void run_eval_recon(const CLI::App& app, EvalReconArgs a) {
  const ReconReport r = evaluate_reconstruction(read_obj(a.pred), read_obj(a.gt), a.options);
  print_recon(r);
  if (!a.out.empty()) {
    std::ostringstream csv;
    csv.precision(9);
    csv << "accuracy,completeness,hausdorff,silhouette,components\n"
        << r.accuracy << ',' << r.completeness << ',' << r.hausdorff << ',' << r.silhouette << ',' << r.components
        << '\n';
    write_text(a.out, csv.str());
    write_manifest(file_manifest(a.out), app, "eval recon");
  }
}

void run_eval_segment(EvalFilesArgs a) {
  const PointCloud pred = read_ply(a.pred);
  const PointCloud gt = read_ply(a.gt);
  if (!pred.labeled() || !gt.labeled()) throw std::invalid_argument("both clouds must carry labels");
  const auto scores = classification_metrics(pred.labels, gt.labels, kOrganClasses);
  std::printf("class precision recall f1 iou\n");
  for (std::size_t k = 0; k < scores.size(); ++k) {
    std::printf("%s %.6f %.6f %.6f %.6f%s\n", std::string(organ_name(static_cast<OrganClass>(k))).c_str(),
                scores[k].precision, scores[k].recall, scores[k].f1, scores[k].iou, scores[k].absent ? " absent" : "");
  }
}

void run_eval_skeleton(EvalFilesArgs a) {
  const double d = chamfer_bidirectional(skeleton_points(read_skeleton(a.pred), kSkeletonStep),
                                         skeleton_points(read_skeleton(a.gt), kSkeletonStep));
  std::printf("skeleton_chamfer %.9g\n", d);
}

void run_eval_dataset(const CLI::App& app, EvalDatasetArgs a, unsigned threads) {
  const Dataset ds = load_dataset(a.data);
  const RvnnModel m = load_rvnn(a.rvnn);
  const PcEncoder e = load_pcenc(a.pcenc);
  check_compatible(e, m);
  auto recs = ds.split(parse_split(a.split));
  if (a.limit > 0 && recs.size() > a.limit) recs.resize(a.limit);
  std::vector<CloudVariant> variants;
  for (const auto& v : a.variants) variants.push_back(parse_variant(v));
  a.options.refine = a.refine;

  std::vector<PlantEval> rows(recs.size() * variants.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    const RecordInfo& r = *recs[i / variants.size()];
    const CloudVariant v = variants[i % variants.size()];
    PlantEval pe = evaluate_plant(ds.lstring(r), ds.cloud(r, v), e, m, a.options);
    pe.id = r.id;
    pe.variant = v;
    rows[i] = std::move(pe);
    log_line("record " + std::to_string(r.id) + " " + std::string(variant_name(v)) + " done");
  });
  write_text(a.out / "metrics.csv", eval_csv(rows));
  const std::string summary = eval_summary(rows);
  write_text(a.out / "summary.txt", summary);
  write_manifest(a.out / "run.json", app, "eval dataset", {{"plants", recs.size()}});
  std::cout << summary;
}

void run_smoke(SmokeArgs a) {
  const SmokeReport r = run_e2e_smoke(a.options);
  std::printf("smoke %s in %.1f s\n", r.passed ? "passed" : "FAILED", r.seconds);
  if (!r.passed) {
    std::string msg = "smoke failed at stage " + r.failed_stage;
    for (const auto& f : r.failures) msg += "; " + f;
    throw std::runtime_error(msg);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Plant reconstruction from point clouds through L-String auto-encoding", "plantrec"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "Key = value settings file ([subcommand] sections); flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "Worker threads, 0 = all cores")->capture_default_str();
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--structures", gen.cfg.structures, "Distinct plant structures")->capture_default_str();
  c_gen->add_option("--per-structure", gen.cfg.per_structure, "Plants per structure")->capture_default_str();
  c_gen->add_option("--points", gen.cfg.points, "Points per clean cloud")->capture_default_str();
  c_gen->add_option("--noise-sigma", gen.cfg.noise_sigma, "Noise sigma relative to plant height")
      ->capture_default_str();
  c_gen->add_option("--depth-views", gen.cfg.depth_views, "Depth captures per plant")->capture_default_str();

  TrainRvnnArgs tr;
  auto* c_tr = app.add_subcommand("train-rvnn", "Train the L-String auto-encoder");
  c_tr->add_option("--data", tr.data, "Dataset directory")->required();
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  c_tr->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  c_tr->add_option("--batch", tr.cfg.batch)->capture_default_str();
  c_tr->add_option("--lr", tr.cfg.adam.lr)->capture_default_str();
  c_tr->add_option("--decay-every", tr.cfg.adam.decay_every)->capture_default_str();
  c_tr->add_option("--pretrain-epochs", tr.cfg.pretrain_epochs)->capture_default_str();
  c_tr->add_option("--clip-norm", tr.cfg.clip_norm)->capture_default_str();
  c_tr->add_option("--w-rec", tr.cfg.model.weights.rec)->capture_default_str();
  c_tr->add_option("--w-step", tr.cfg.model.weights.step)->capture_default_str();
  c_tr->add_option("--w-split", tr.cfg.model.weights.split)->capture_default_str();
  c_tr->add_option("--w-node", tr.cfg.model.weights.node)->capture_default_str();

  TrainEncoderArgs te;
  auto* c_te = app.add_subcommand("train-encoder", "Train the point-cloud encoder against a frozen auto-encoder");
  c_te->add_option("--data", te.data, "Dataset directory")->required();
  c_te->add_option("--rvnn", te.rvnn, "Auto-encoder checkpoint")->required();
  c_te->add_option("--out", te.out, "Output directory")->required();
  c_te->add_option("--epochs", te.cfg.epochs)->capture_default_str();
  c_te->add_option("--batch", te.cfg.batch)->capture_default_str();
  c_te->add_option("--lr", te.cfg.adam.lr)->capture_default_str();
  c_te->add_option("--decay-every", te.cfg.adam.decay_every)->capture_default_str();
  c_te->add_option("--h1", te.cfg.encoder.h1)->capture_default_str();
  c_te->add_option("--h2", te.cfg.encoder.h2)->capture_default_str();
  c_te->add_option("--width", te.cfg.encoder.width, "Pooled feature width")->capture_default_str();
  c_te->add_option("--head", te.cfg.encoder.head)->capture_default_str();
  c_te->add_option("--budget", te.cfg.encoder.budget, "Points fed to the network")->capture_default_str();
  c_te->add_option("--noise-sigma", te.cfg.noise_sigma)->capture_default_str();
  c_te->add_option("--p-noisy", te.cfg.p_noisy)->capture_default_str();
  c_te->add_option("--p-depth", te.cfg.p_depth)->capture_default_str();

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer", "Predict an L-String from a point cloud");
  c_inf->add_option("--cloud", inf.cloud)->required();
  c_inf->add_option("--rvnn", inf.rvnn)->required();
  c_inf->add_option("--pcenc", inf.pcenc)->required();
  c_inf->add_option("--out", inf.out)->required();
  c_inf->add_flag("--refine", inf.refine, "Fit parameters to the cloud");
  c_inf->add_option("--sweeps", inf.refine_options.sweeps)->capture_default_str();
  c_inf->add_flag("!--no-phyllotaxis", inf.refine_options.phyllotaxis, "Keep phyllotaxis angles fixed");

  PathPair rec;
  auto* c_rec = app.add_subcommand("reconstruct", "Triangle mesh of an L-String");
  c_rec->add_option("--lstring", rec.in)->required();
  c_rec->add_option("--out", rec.out)->required();

  PathPair skel;
  auto* c_skel = app.add_subcommand("skeleton", "Stem and petiole center lines of an L-String");
  c_skel->add_option("--lstring", skel.in)->required();
  c_skel->add_option("--out", skel.out)->required();

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Label a point cloud from an L-String");
  c_seg->add_option("--lstring", seg.lstring)->required();
  c_seg->add_option("--cloud", seg.cloud)->required();
  c_seg->add_option("--out", seg.out)->required();
  c_seg->add_option("--k", seg.options.k)->capture_default_str();

  auto* c_eval = app.add_subcommand("eval", "Evaluation");
  c_eval->require_subcommand(1);
  EvalReconArgs er;
  auto* c_er = c_eval->add_subcommand("recon", "Compare two meshes");
  c_er->add_option("--pred", er.pred)->required();
  c_er->add_option("--gt", er.gt)->required();
  c_er->add_option("--out", er.out, "Optional CSV");
  c_er->add_option("--views", er.options.views)->capture_default_str();
  c_er->add_option("--resolution", er.options.resolution)->capture_default_str();
  c_er->add_option("--samples", er.options.samples)->capture_default_str();
  EvalFilesArgs es;
  auto* c_es = c_eval->add_subcommand("segment", "Compare labeled clouds");
  c_es->add_option("--pred", es.pred)->required();
  c_es->add_option("--gt", es.gt)->required();
  EvalFilesArgs ek;
  auto* c_ek = c_eval->add_subcommand("skeleton", "Compare skeletons");
  c_ek->add_option("--pred", ek.pred)->required();
  c_ek->add_option("--gt", ek.gt)->required();
  EvalDatasetArgs ed;
  auto* c_ed = c_eval->add_subcommand("dataset", "Run the pipeline over a dataset split");
  c_ed->add_option("--data", ed.data)->required();
  c_ed->add_option("--rvnn", ed.rvnn)->required();
  c_ed->add_option("--pcenc", ed.pcenc)->required();
  c_ed->add_option("--out", ed.out)->required();
  c_ed->add_option("--split", ed.split)->capture_default_str();
  c_ed->add_option("--variants", ed.variants)->capture_default_str();
  c_ed->add_option("--limit", ed.limit, "Plants per split, 0 = all")->capture_default_str();
  c_ed->add_option("--refine", ed.refine)->capture_default_str();
  c_ed->add_option("--views", ed.options.recon.views)->capture_default_str();

  SmokeArgs sm;
  auto* c_sm = app.add_subcommand("smoke", "End-to-end smoke run on a micro dataset");
  c_sm->add_option("--out", sm.options.dir)->required();
  c_sm->add_option("--rvnn-epochs", sm.options.rvnn_epochs)->capture_default_str();
  c_sm->add_option("--pcenc-epochs", sm.options.pcenc_epochs)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    std::cerr << app.help();
    return 2;
  }

  try {
    gen.cfg.seed = tr.cfg.seed = te.cfg.seed = sm.options.seed = seed;
    gen.cfg.threads = sm.options.threads = threads;
    if (*c_gen) run_generate(app, gen);
    if (*c_tr) run_train_rvnn(app, tr);
    if (*c_te) run_train_encoder(app, te);
    if (*c_inf) run_infer(app, inf);
    if (*c_rec) run_reconstruct(app, rec);
    if (*c_skel) run_skeleton(app, skel);
    if (*c_seg) run_segment(app, seg);
    if (*c_er) run_eval_recon(app, er);
    if (*c_es) run_eval_segment(es);
    if (*c_ek) run_eval_skeleton(ek);
    if (*c_ed) run_eval_dataset(app, ed, threads);
    if (*c_sm) run_smoke(sm);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Smoke run

SmokeReport run_e2e_smoke(const SmokeOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  SmokeReport report;
  std::string stage;
  auto fail = [&](const std::string& what) { report.failures.push_back(stage + ": " + what); };
  try {
    stage = "generate";
    DatasetConfig dc;
    dc.structures = o.structures;
    dc.per_structure = o.per_structure;
    dc.seed = o.seed;
    dc.points = 2048;
    dc.threads = o.threads;
    const Dataset ds = build_dataset(dc, o.dir / "data");
    if (ds.records.size() != o.structures * o.per_structure) fail("unexpected record count");

    stage = "train-rvnn";
    RvnnTrainConfig rc;
    rc.epochs = o.rvnn_epochs;
    rc.seed = o.seed;
    rc.adam.decay_every = std::max(1, o.rvnn_epochs / 2);
    const auto rv = train_rvnn(split_trees(ds, Split::Train), split_trees(ds, Split::Val), rc);
    save_rvnn(o.dir / "rvnn.ckpt", rv.model);
    const RvnnModel m = load_rvnn(o.dir / "rvnn.ckpt");
    if (checkpoint_hash(rvnn_tensors(m)) != checkpoint_hash(rvnn_tensors(rv.model))) fail("checkpoint reload differs");

    stage = "train-encoder";
    PcEncTrainConfig pc;
    pc.epochs = o.pcenc_epochs;
    pc.seed = o.seed;
    pc.encoder = {32, 64, 128, 128, m.config.latent, 512, 0x5eed};
    pc.adam.decay_every = std::max(1, o.pcenc_epochs / 2);
    const auto train = split_samples(ds, Split::Train, m);
    const auto pe = train_pcenc(train, split_samples(ds, Split::Val, m), normalization_of(train),
                                checkpoint_hash(rvnn_tensors(m)), pc);
    save_pcenc(o.dir / "pcenc.ckpt", pe.model);
    const PcEncoder e = load_pcenc(o.dir / "pcenc.ckpt");

    stage = "infer";
    auto recs = ds.split(Split::Test);
    if (recs.size() > o.test_clouds) recs.resize(o.test_clouds);
    EvalOptions eo;
    eo.recon.views = 64;
    eo.recon.resolution = 128;
    eo.recon.samples = 5000;
    eo.refine_options.sweeps = 1;
    std::vector<PlantEval> rows;
    for (const auto* r : recs) {
      const PointCloud cloud = ds.cloud(*r, CloudVariant::Clean);
      PlantEval pev = evaluate_plant(ds.lstring(*r), cloud, e, m, eo);
      pev.id = r->id;

      stage = "tasks";
      const fs::path base = o.dir / "out" / std::to_string(r->id);
      write_lstring(fs::path(base.string() + ".lstr"), pev.predicted);
      const TriangleMesh mesh = reconstruct(pev.predicted);
      write_obj(fs::path(base.string() + ".obj"), mesh);
      write_skeleton(fs::path(base.string() + "_skeleton.txt"), extract_skeleton(pev.predicted));
      PointCloud labeled = cloud;
      const SegmentationResult seg = segment(pev.predicted, cloud);
      labeled.labels = seg.labels;
      labeled.instances = seg.instances;
      write_ply(fs::path(base.string() + "_labels.ply"), labeled);

      stage = "invariants";
      const std::string id = "record " + std::to_string(r->id);
      if (pev.recon.components != 1) fail(id + " has " + std::to_string(pev.recon.components) + " components");
      if (connected_components(read_obj(fs::path(base.string() + ".obj"))) != 1) fail(id + " exported mesh split");
      if (!pev.labels_total) fail(id + " segmentation is not total");
      if (!pev.skeleton_leaf_free) fail(id + " skeleton leaves the stem and petiole axes");
      if (read_lstring(fs::path(base.string() + ".lstr")) != pev.predicted) fail(id + " L-String round trip");
      rows.push_back(std::move(pev));
      stage = "infer";
    }
    stage = "metrics";
    report.metrics_csv = eval_csv(rows);
    write_text(o.dir / "metrics.csv", report.metrics_csv);
    write_text(o.dir / "summary.txt", eval_summary(rows));
  } catch (const std::exception& ex) {
    fail(one_line(ex.what()));
  }
  if (!report.failures.empty()) report.failed_stage = report.failures.front().substr(0, report.failures.front().find(':'));
  report.passed = report.failures.empty();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace plantrec
