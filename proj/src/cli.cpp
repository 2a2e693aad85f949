#include "qcroute/cli.hpp"

#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcroute/error.hpp"
#include "qcroute/estimator.hpp"
#include "qcroute/eval.hpp"
#include "qcroute/imgmetrics.hpp"
#include "qcroute/jsonio.hpp"
#include "qcroute/pool.hpp"
#include "qcroute/router.hpp"
#include "qcroute/synth.hpp"

namespace qcroute::cli {

namespace {

RoutingPool load_pool_file(const std::string& path) { return load_pool(read_file(path)); }

Dataset load_dataset_file(const std::string& path, const RoutingPool& pool) {
  return load_dataset(read_file(path), pool);
}

// Emits the payload to --out (atomically) with a one-line summary on stdout,
// or the payload itself to stdout when no --out was given.
void emit(const std::string& out_path, const std::string& payload, const std::string& summary,
          std::ostream& out) {
  if (out_path.empty()) {
    out << payload;
  } else {
    write_file_atomic(out_path, payload);
    out << summary << '\n';
  }
}

std::string featurize_stream(const std::string& jsonl, std::size_t dim, std::size_t& count) {
  std::string result;
  std::size_t line_no = 0, pos = 0;
  count = 0;
  while (pos < jsonl.size()) {
    std::size_t eol = jsonl.find('\n', pos);
    if (eol == std::string::npos) eol = jsonl.size();
    const std::string line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ValidationError("featurize: line " + std::to_string(line_no) + ": invalid JSON");
    if (!j.contains("prompt_id") || !j["prompt_id"].is_string())
      throw ValidationError("featurize: line " + std::to_string(line_no) +
                            ": missing string \"prompt_id\"");
    const std::string text = j.value("text", "");
    const auto features = featurize_prompt(text, dim);

    result += "{\"prompt_id\":" + json_quote(j["prompt_id"].get<std::string>());
    if (j.contains("text")) result += ",\"text\":" + json_quote(text);
    result += ",\"features\":[";
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (i) result += ',';
      result += fmt_double(features[i]);
    }
    result += ']';
    if (j.contains("qualities") && j["qualities"].is_object()) {
      result += ",\"qualities\":{";
      bool first = true;
      for (const auto& [mid, samples] : j["qualities"].items()) {
        if (!first) result += ',';
        first = false;
        result += json_quote(mid) + ":[";
        bool s_first = true;
        for (const auto& s : samples) {
          if (!s_first) result += ',';
          s_first = false;
          result += fmt_double(s.get<double>());
        }
        result += ']';
      }
      result += '}';
    }
    if (j.contains("split")) result += ",\"split\":" + json_quote(j["split"].get<std::string>());
    result += "}\n";
    ++count;
  }
  return result;
}

std::vector<double> read_sample_file(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<double> values;
  std::istringstream is(text);
  double v = 0.0;
  while (is >> v) values.push_back(v);
  if (!is.eof()) throw ValidationError("samples: cannot parse numbers in " + path);
  if (values.empty()) throw ValidationError("samples: no values in " + path);
  return values;
}

struct CommonArgs {
  std::string pool_path;
  std::string data_path;
  std::string split = "test";
  std::string estimator_path;
  std::string out_path;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cost-aware routing over a pool of generators: train quality estimators, "
               "route prompts, sweep deferral curves, and evaluate the results",
               "qcroute"};
  app.require_subcommand(1);

  CommonArgs a;
  auto add_pool = [&](CLI::App* cmd) {
    cmd->add_option("--pool", a.pool_path, "pool JSON file")->required();
  };
  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", a.data_path, "dataset JSONL file")->required();
  };
  auto add_split = [&](CLI::App* cmd) {
    cmd->add_option("--split", a.split, "dataset split (train|val|test)");
  };
  auto add_estimator = [&](CLI::App* cmd) {
    cmd->add_option("--estimator", a.estimator_path, "estimator model file")->required();
  };
  auto add_out = [&](CLI::App* cmd) {
    cmd->add_option("--out", a.out_path, "output file (default: stdout)");
  };

  // pool validate
  auto* pool_cmd = app.add_subcommand("pool", "pool file utilities");
  pool_cmd->require_subcommand(1);
  auto* pool_validate = pool_cmd->add_subcommand("validate", "validate a pool (and optionally a dataset)");
  add_pool(pool_validate);
  pool_validate->add_option("--data", a.data_path, "dataset JSONL to validate against the pool");
  pool_validate->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    std::string msg = "{\"models\":" + std::to_string(pool.size()) + ",\"ids\":[";
    for (std::size_t m = 0; m < pool.size(); ++m) {
      if (m) msg += ',';
      msg += json_quote(pool.model(m).id);
    }
    msg += ']';
    if (!a.data_path.empty()) {
      const Dataset ds = load_dataset_file(a.data_path, pool);
      msg += ",\"records\":" + std::to_string(ds.records.size()) +
             ",\"feature_dim\":" + std::to_string(ds.feature_dim);
    }
    out << msg << "}\n";
  });

  // featurize
  std::size_t dim = 64;
  auto* featurize = app.add_subcommand("featurize", "fill record features from prompt text");
  add_data(featurize);
  featurize->add_option("--dim", dim, "feature dimension")->check(CLI::PositiveNumber);
  add_out(featurize);
  featurize->callback([&] {
    std::size_t count = 0;
    const std::string payload = featurize_stream(read_file(a.data_path), dim, count);
    emit(a.out_path, payload,
         "{\"written\":" + json_quote(a.out_path) + ",\"records\":" + std::to_string(count) + "}",
         out);
  });

  // train knn | mlp
  auto* train = app.add_subcommand("train", "fit a quality estimator on the train split");
  train->require_subcommand(1);
  std::size_t knn_k = 100;
  auto* train_knn = train->add_subcommand("knn", "k-nearest-neighbor estimator");
  add_pool(train_knn);
  add_data(train_knn);
  train_knn->add_option("--k", knn_k, "neighbor count");
  train_knn->add_option("--out", a.out_path, "model output file")->required();
  train_knn->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const Dataset ds = load_dataset_file(a.data_path, pool);
    const LabelScaler scaler = fit_scaler(collect_labels(ds, Split::train));
    const KnnIndex index = knn_build(ds, knn_k, scaler);
    write_file_atomic(a.out_path, index.serialize());
    out << "{\"type\":\"knn\",\"n\":" << index.size() << ",\"k\":" << index.k() << ",\"written\":"
        << json_quote(a.out_path) << "}\n";
  });

  std::size_t hidden = 32, epochs = 200, batch = 32;
  double lr = 0.5;
  std::uint64_t seed = 1;
  auto* train_mlp = train->add_subcommand("mlp", "two-layer sigmoid-head estimator");
  add_pool(train_mlp);
  add_data(train_mlp);
  train_mlp->add_option("--hidden", hidden, "hidden width");
  train_mlp->add_option("--epochs", epochs, "training epochs");
  train_mlp->add_option("--lr", lr, "learning rate");
  train_mlp->add_option("--batch", batch, "minibatch size");
  train_mlp->add_option("--seed", seed, "init/shuffle seed");
  train_mlp->add_option("--out", a.out_path, "model output file")->required();
  train_mlp->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const Dataset ds = load_dataset_file(a.data_path, pool);
    const LabelScaler scaler = fit_scaler(collect_labels(ds, Split::train));
    MlpModel model = mlp_init(ds.feature_dim, hidden, pool.size(), seed);
    model = mlp_train(std::move(model), ds, scaler, epochs, lr, batch, seed + 1);
    std::vector<LabeledExample> all;
    for (const auto* rec : ds.split_records(Split::train)) {
      LabeledExample ex{rec->features, {}};
      for (double v : rec->labels) ex.targets.push_back(scaler.apply(v));
      all.push_back(std::move(ex));
    }
    const double final_loss = mlp_loss(model, all);
    write_file_atomic(a.out_path, model.serialize());
    out << "{\"type\":\"mlp\",\"final_loss\":" << fmt_double(final_loss) << ",\"written\":"
        << json_quote(a.out_path) << "}\n";
  });

  // route
  double lambda = 0.0;
  auto* route_cmd = app.add_subcommand("route", "route a split with a trained estimator");
  add_pool(route_cmd);
  add_data(route_cmd);
  add_split(route_cmd);
  add_estimator(route_cmd);
  route_cmd->add_option("--lambda", lambda, "cost weight");
  add_out(route_cmd);
  route_cmd->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const Dataset ds = load_dataset_file(a.data_path, pool);
    const auto estimator = load_estimator(read_file(a.estimator_path));
    const auto decisions = route_batch(*estimator, ds, parse_split(a.split), pool,
                                       RouterConfig{lambda});
    emit(a.out_path, serialize_decisions(decisions, lambda),
         "{\"written\":" + json_quote(a.out_path) +
             ",\"decisions\":" + std::to_string(decisions.size()) + "}",
         out);
  });

  // calibrate
  double budget = 0.0, tol = 1e-9;
  auto* calibrate = app.add_subcommand("calibrate", "find the smallest lambda meeting a budget");
  add_pool(calibrate);
  add_data(calibrate);
  add_split(calibrate);
  add_estimator(calibrate);
  calibrate->add_option("--budget", budget, "average cost budget")->required();
  calibrate->add_option("--tol", tol, "bisection width");
  calibrate->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const Dataset ds = load_dataset_file(a.data_path, pool);
    const auto estimator = load_estimator(read_file(a.estimator_path));
    const Split split = parse_split(a.split);
    const double cal = calibrate_lambda(*estimator, ds, split, pool, budget, tol);
    const auto decisions = route_batch(*estimator, ds, split, pool, RouterConfig{cal});
    const auto [q, c] = avg_quality_cost(decisions, ds, split, pool);
    out << "{\"lambda\":" << fmt_double(cal) << ",\"avg_cost\":" << fmt_double(c)
        << ",\"avg_quality\":" << fmt_double(q) << "}\n";
  });

  // sweep
  std::string lambdas_text;
  bool no_zero = false;
  auto* sweep = app.add_subcommand("sweep", "trace a deferral curve over a lambda grid");
  add_pool(sweep);
  add_data(sweep);
  add_split(sweep);
  add_estimator(sweep);
  sweep->add_option("--lambdas", lambdas_text,
                    "grid: log:<lo>:<hi>:<n> or comma list (default log:1e-6:1e0:50)");
  sweep->add_flag("--no-zero", no_zero, "do not prepend lambda=0");
  add_out(sweep);
  sweep->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const Dataset ds = load_dataset_file(a.data_path, pool);
    const auto estimator = load_estimator(read_file(a.estimator_path));
    const std::vector<double> grid = lambdas_text.empty()
                                         ? parse_lambda_grid("log:1e-6:1e0:50", !no_zero)
                                         : parse_lambda_grid(lambdas_text, !no_zero);
    const DeferralCurve curve =
        deferral_curve(*estimator, ds, parse_split(a.split), pool, grid);
    emit(a.out_path, serialize_curve_csv(curve, pool),
         "{\"written\":" + json_quote(a.out_path) +
             ",\"points\":" + std::to_string(curve.points.size()) + "}",
         out);
  });

  // eval qnc | rates | ttest
  auto* eval_cmd = app.add_subcommand("eval", "evaluation utilities");
  eval_cmd->require_subcommand(1);

  double ref_cost = 0.0, ref_quality = 0.0;
  auto* eval_qnc = eval_cmd->add_subcommand("qnc", "quality-neutral cost from a curve CSV");
  eval_qnc->add_option("--data", a.data_path, "curve CSV file")->required();
  eval_qnc->add_option("--ref-cost", ref_cost, "reference model cost")->required();
  eval_qnc->add_option("--ref-quality", ref_quality, "reference model quality")->required();
  eval_qnc->callback([&] {
    const DeferralCurve curve = parse_curve_csv(read_file(a.data_path));
    const auto pct = qnc(curve, ref_cost, ref_quality);
    if (pct)
      out << "{\"qnc_percent\":" << fmt_double(*pct) << "}\n";
    else
      out << "{\"qnc_percent\":null}\n";
  });

  auto* eval_rates = eval_cmd->add_subcommand("rates", "selection rates from a decisions JSONL");
  add_pool(eval_rates);
  eval_rates->add_option("--data", a.data_path, "decisions JSONL file")->required();
  eval_rates->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const auto decisions = parse_decisions(read_file(a.data_path), pool);
    const auto rates = selection_rates(decisions, pool);
    std::string msg = "{\"rates\":{";
    for (std::size_t m = 0; m < pool.size(); ++m) {
      if (m) msg += ',';
      const auto& id = pool.model(m).id;
      msg += json_quote(id) + ":" + fmt_double(rates.at(id));
    }
    out << msg << "}}\n";
  });

  std::string sample_a, sample_b;
  auto* eval_ttest = eval_cmd->add_subcommand("ttest", "Welch's t-test between two sample files");
  eval_ttest->add_option("file_a", sample_a, "first sample file (whitespace-separated numbers)")
      ->required();
  eval_ttest->add_option("file_b", sample_b, "second sample file")->required();
  eval_ttest->callback([&] {
    const auto va = read_sample_file(sample_a);
    const auto vb = read_sample_file(sample_b);
    const TTestResult r = welch_ttest(va, vb);
    out << "{\"t\":" << fmt_double(r.t) << ",\"dof\":" << fmt_double(r.dof)
        << ",\"p\":" << fmt_double(r.p) << "}\n";
  });

  // sharpness
  std::vector<std::string> image_paths;
  auto* sharp = app.add_subcommand("sharpness", "sharpness metric of PGM/PPM images");
  sharp->add_option("images", image_paths, "image files (binary P5/P6)")->required();
  add_out(sharp);
  sharp->callback([&] {
    std::string payload;
    for (const auto& path : image_paths) {
      const Image img = read_pnm(read_file(path));
      payload += "{\"file\":" + json_quote(path) + ",\"sharpness\":" + fmt_double(sharpness(img)) +
                 "}\n";
    }
    emit(a.out_path, payload,
         "{\"written\":" + json_quote(a.out_path) +
             ",\"images\":" + std::to_string(image_paths.size()) + "}",
         out);
  });

  // synth gen | frontier
  auto* synth = app.add_subcommand("synth", "synthetic instances and the brute-force frontier");
  synth->require_subcommand(1);

  std::string spec_path, truth_path, pool_out;
  std::uint64_t gen_seed = 0;
  bool seed_given = false;
  auto* synth_gen = synth->add_subcommand("gen", "generate a dataset from a synth spec");
  synth_gen->add_option("--spec", spec_path, "synth spec JSON file")->required();
  synth_gen->add_option("--seed", gen_seed, "override the spec's seed")
      ->each([&](const std::string&) { seed_given = true; });
  synth_gen->add_option("--out", a.out_path, "dataset JSONL output")->required();
  synth_gen->add_option("--truth", truth_path, "write the exact mu table here");
  synth_gen->add_option("--pool-out", pool_out, "write the matching pool JSON here");
  synth_gen->callback([&] {
    const SynthSpec spec = load_synth_spec(read_file(spec_path));
    const std::uint64_t use_seed = seed_given ? gen_seed : spec.seed;
    const SynthResult result = generate_synth_dataset(spec, use_seed);
    write_file_atomic(a.out_path, serialize_dataset(result.dataset));
    if (!truth_path.empty()) write_file_atomic(truth_path, serialize_truth(spec, result));
    if (!pool_out.empty()) write_file_atomic(pool_out, serialize_pool(result.dataset.pool));
    out << "{\"records\":" << result.dataset.records.size() << ",\"seed\":" << use_seed
        << ",\"written\":" << json_quote(a.out_path) << "}\n";
  });

  auto* synth_frontier = synth->add_subcommand("frontier", "enumerate the non-dominated frontier");
  add_pool(synth_frontier);
  add_data(synth_frontier);
  add_split(synth_frontier);
  add_out(synth_frontier);
  synth_frontier->callback([&] {
    const RoutingPool pool = load_pool_file(a.pool_path);
    const Dataset ds = load_dataset_file(a.data_path, pool);
    const auto frontier = brute_force_frontier(ds, parse_split(a.split), pool);
    std::string payload = "avg_cost,avg_quality\n";
    for (const auto& f : frontier)
      payload += fmt_double(f.avg_cost) + "," + fmt_double(f.avg_quality) + "\n";
    emit(a.out_path, payload,
         "{\"written\":" + json_quote(a.out_path) +
             ",\"points\":" + std::to_string(frontier.size()) + "}",
         out);
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const DegenerateError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace qcroute::cli
