#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "imci/bench.hpp"
#include "imci/net.hpp"
#include "imci/verify.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop.load())
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

std::string trim_ws(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

// --config loads `key = value` lines; repeated --set pairs override them.
imci::Config make_config(const std::string& file,
                         const std::vector<std::string>& sets) {
  imci::Config cfg;
  if (!file.empty()) cfg.load_file(file);
  for (const auto& kv : sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      imci::raise(imci::ErrorCode::InvalidArgument,
                  "--set expects key=value, got: " + kv);
    cfg.set(trim_ws(kv.substr(0, eq)), trim_ws(kv.substr(eq + 1)));
  }
  return cfg;
}

std::string unique_tmp_dir(const std::string& tag) {
  auto base = std::filesystem::temp_directory_path() /
              ("imci_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(base);
  return base.string();
}

// In-process runs need a directory without leftover tables or log segments.
std::string require_fresh_dir(const std::string& given,
                              const std::string& tag) {
  if (given.empty()) return unique_tmp_dir(tag);
  if (std::filesystem::exists(given) && !std::filesystem::is_empty(given))
    imci::raise(imci::ErrorCode::InvalidArgument,
                "data dir must be new or empty: " + given);
  std::filesystem::create_directories(given);
  return given;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    imci::raise(imci::ErrorCode::IoFailure, "cannot write " + path);
  out << body;
}

void print_query_result(const imci::QueryResult& q) {
  for (size_t i = 0; i < q.columns.size(); ++i)
    std::cout << (i ? "\t" : "") << q.columns[i];
  std::cout << "\n";
  for (const auto& row : q.rows) {
    for (size_t i = 0; i < row.values.size(); ++i) {
      if (i) std::cout << "\t";
      if (std::holds_alternative<int64_t>(row.values[i]))
        std::cout << std::get<int64_t>(row.values[i]);
      else
        std::cout << std::get<std::string>(row.values[i]);
    }
    std::cout << "\n";
  }
  if (q.agg_null && q.rows.size() == 1) std::cout << "(null aggregate)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale HTAP storage and replication engine"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> config_sets;
  app.add_option("--config", config_file,
                 "config file with `key = value` lines")
      ->check(CLI::ExistingFile);
  app.add_option("--set", config_sets,
                 "override one config key, e.g. --set phase2.workers=8");

  // -- init ------------------------------------------------------------
  auto* c_init = app.add_subcommand("init", "create an empty data directory");
  std::string init_dir;
  c_init->add_option("--data-dir", init_dir, "data directory")->required();

  // -- rw --------------------------------------------------------------
  auto* c_rw = app.add_subcommand("rw", "serve the read-write node");
  std::string rw_dir, rw_role = "leader";
  uint16_t rw_port = 7701;
  c_rw->add_option("--data-dir", rw_dir, "data directory")->required();
  c_rw->add_option("--port", rw_port, "listen port (default 7701)");
  c_rw->add_option("--role", rw_role, "node role; only `leader` is valid")
      ->check(CLI::IsMember({"leader"}));

  // -- ro --------------------------------------------------------------
  auto* c_ro = app.add_subcommand("ro", "serve a read-only replica");
  std::string ro_dir, ro_id = "ro1", ro_from = "auto";
  uint16_t ro_port = 7702;
  c_ro->add_option("--data-dir", ro_dir, "data directory (shared with rw)")
      ->required();
  c_ro->add_option("--port", ro_port, "listen port (default 7702)");
  c_ro->add_option("--node-id", ro_id, "replica id (default ro1)");
  c_ro->add_option("--from", ro_from,
                   "bootstrap mode: auto | scratch | checkpoint")
      ->check(CLI::IsMember({"auto", "scratch", "checkpoint"}));

  // -- proxy -----------------------------------------------------------
  auto* c_proxy = app.add_subcommand("proxy", "serve the routing front door");
  std::string px_rw, px_dir;
  std::vector<std::string> px_ros;
  uint16_t px_port = 7700;
  c_proxy->add_option("--port", px_port, "listen port (default 7700)");
  c_proxy->add_option("--rw", px_rw, "rw node address host:port")->required();
  c_proxy->add_option("--ro", px_ros, "ro node address (repeatable)");
  c_proxy->add_option("--data-dir", px_dir,
                      "data directory for applied-LSN sidecar files");

  // -- bench -----------------------------------------------------------
  auto* c_bench = app.add_subcommand("bench", "run a deterministic workload");
  std::string b_workload = "insert_only", b_dir, b_connect, b_out = "bench";
  std::vector<std::string> b_status;
  double b_rate = 1000, b_seconds = 10, b_theta = 0.99;
  uint64_t b_seed = 42, b_preload = 1000;
  int b_tables = 100, b_clients = 2, b_ros = 2;
  c_bench->add_option("--workload", b_workload,
                      "insert_only | write_only_zipf | mixed");
  c_bench->add_option("--rate", b_rate, "target ops/s, 0 = unthrottled");
  c_bench->add_option("--seconds", b_seconds, "measurement duration");
  c_bench->add_option("--seed", b_seed, "op stream seed");
  c_bench->add_option("--tables", b_tables, "table count (default 100)");
  c_bench->add_option("--clients", b_clients, "client threads (default 2)");
  c_bench->add_option("--zipf-theta", b_theta,
                      "zipf skew for write_only_zipf (default 0.99)");
  c_bench->add_option("--preload", b_preload,
                      "rows per table before the timed phase");
  c_bench->add_option("--ros", b_ros, "replicas in the in-process cluster");
  c_bench->add_option("--data-dir", b_dir,
                      "data directory (in-process mode; default: fresh tmp)");
  c_bench->add_option("--connect", b_connect,
                      "proxy address host:port (wire mode)");
  c_bench->add_option("--status", b_status,
                      "node address to poll for lag samples (wire mode)");
  c_bench->add_option("--out", b_out, "report path prefix (default bench)");

  // -- vd --------------------------------------------------------------
  auto* c_vd = app.add_subcommand("vd", "measure commit-to-visible delay");
  std::string v_dir, v_out = "vd";
  double v_poll = 1.0, v_seconds = 5.0, v_rate = 1000.0;
  uint64_t v_seed = 42;
  int v_ros = 1;
  c_vd->add_option("--poll-ms", v_poll, "visibility poll interval in ms");
  c_vd->add_option("--seconds", v_seconds, "measurement duration");
  c_vd->add_option("--rate", v_rate, "background insert load ops/s");
  c_vd->add_option("--seed", v_seed, "load stream seed");
  c_vd->add_option("--ros", v_ros, "replicas in the in-process cluster");
  c_vd->add_option("--data-dir", v_dir, "data directory (default: fresh tmp)");
  c_vd->add_option("--out", v_out, "report path prefix (default vd)");

  // -- scale-out -------------------------------------------------------
  auto* c_scale = app.add_subcommand(
      "scale-out", "time checkpoint bootstrap vs row-store rebuild");
  std::string s_dir, s_out = "scale_out";
  int s_nodes = 2, s_tables = 4;
  double s_rate = 1000, s_warmup = 2.0;
  uint64_t s_seed = 42, s_preload = 0;
  c_scale->add_option("--nodes", s_nodes, "new nodes to add (default 2)");
  c_scale->add_option("--rate", s_rate, "steady load ops/s during the demo");
  c_scale->add_option("--warmup", s_warmup, "seconds of load before node 1");
  c_scale->add_option("--preload", s_preload,
                      "rows bulk-loaded before the demo");
  c_scale->add_option("--tables", s_tables, "table count");
  c_scale->add_option("--seed", s_seed, "load stream seed");
  c_scale->add_option("--data-dir", s_dir,
                      "data directory (default: fresh tmp)");
  c_scale->add_option("--out", s_out, "report path prefix");

  // -- checkpoint --------------------------------------------------------
  auto* c_ckpt = app.add_subcommand(
      "checkpoint", "replay the local log and persist a checkpoint");
  std::string k_dir;
  c_ckpt->add_option("--data-dir", k_dir, "data directory")->required();

  // -- query -------------------------------------------------------------
  auto* c_query = app.add_subcommand("query", "execute one statement");
  std::string q_stmt, q_dir, q_connect, q_cons = "eventual";
  c_query->add_option("statement", q_stmt, "statement text")->required();
  c_query->add_option("--data-dir", q_dir, "data directory (local mode)");
  c_query->add_option("--connect", q_connect, "proxy address (wire mode)");
  c_query->add_option("--consistency", q_cons, "eventual | strong")
      ->check(CLI::IsMember({"eventual", "strong"}));

  // -- verify ------------------------------------------------------------
  auto* c_verify = app.add_subcommand("verify", "run the oracle suites");
  std::string f_scale = "small", f_work, f_json;
  uint64_t f_seed = 42;
  bool f_fault = false;
  c_verify->add_option("--seed", f_seed, "suite seed");
  c_verify->add_option("--scale", f_scale, "0 | small | full")
      ->check(CLI::IsMember({"0", "none", "small", "full"}));
  c_verify->add_flag("--inject-fault", f_fault,
                     "drop one replicated DML effect; verify must fail");
  c_verify->add_option("--work-dir", f_work, "scratch directory");
  c_verify->add_option("--json", f_json, "also write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    imci::Config cfg = make_config(config_file, config_sets);

    if (*c_init) {
      std::filesystem::create_directories(init_dir);
      imci::RowStore store(init_dir, cfg);
      std::cout << "initialized " << init_dir << " at lsn "
                << store.log().written_lsn() << "\n";
      return 0;
    }

    if (*c_rw) {
      imci::RowStore store(rw_dir, cfg);
      imci::NodeServer server(rw_port, store, "rw");
      std::cout << "rw serving " << rw_dir << " on port " << server.port()
                << "\n"
                << std::flush;
      wait_for_signal();
      server.stop();
      return 0;
    }

    if (*c_ro) {
      imci::RoEngine eng(ro_dir, cfg, ro_id);
      if (ro_from == "scratch")
        eng.start(imci::RoEngine::StartMode::Scratch);
      else if (ro_from == "checkpoint")
        eng.start(imci::RoEngine::StartMode::FromCheckpoint);
      else
        eng.start();
      imci::AppliedSidecar sidecar(eng);
      imci::NodeServer server(ro_port, eng);
      std::cout << "ro " << ro_id << " serving " << ro_dir << " on port "
                << server.port() << "\n"
                << std::flush;
      wait_for_signal();
      server.stop();
      sidecar.stop();
      eng.stop();
      return 0;
    }

    if (*c_proxy) {
      imci::ProxyServer proxy(px_port, px_rw, px_ros, cfg, px_dir);
      std::cout << "proxy serving on port " << proxy.port() << " (rw "
                << px_rw << ", " << px_ros.size() << " ro)\n"
                << std::flush;
      wait_for_signal();
      proxy.stop();
      return 0;
    }

    if (*c_bench) {
      imci::WorkloadSpec spec;
      spec.kind = imci::parse_workload_kind(b_workload);
      spec.tables = b_tables;
      spec.zipf_theta = b_theta;
      spec.ops_per_second = b_rate;
      spec.duration_s = b_seconds;
      spec.seed = b_seed;
      spec.clients = b_clients;
      spec.preload_rows = b_preload;

      imci::BenchReport report;
      if (!b_connect.empty()) {
        report = imci::run_bench(spec, imci::wire_sessions(b_connect),
                                 b_status.empty()
                                     ? imci::ClusterProbe{}
                                     : imci::probe_status_addrs(b_status));
      } else {
        std::string dir = require_fresh_dir(b_dir, "bench");
        imci::InProcessCluster cl(dir, cfg, static_cast<size_t>(b_ros));
        report = imci::run_bench(spec, imci::local_sessions(cl),
                                 imci::probe_cluster(cl));
        cl.stop();
      }
      write_text_file(b_out + ".json", report.to_json().dump(2) + "\n");
      {
        std::ofstream lag(b_out + "_lag.csv", std::ios::trunc);
        report.write_lag_csv(lag);
        std::ofstream tp(b_out + "_throughput.csv", std::ios::trunc);
        report.write_throughput_csv(tp);
      }
      std::cout << "committed " << report.ops_committed << " ops ("
                << report.ops_failed << " failed) in " << report.wall_s
                << "s: " << report.tp_ops_per_s() << " ops/s\n";
      auto lsn_rates = report.applied_lsn_per_s();
      for (const auto& [node, rate] : report.replay_dmls_per_s()) {
        std::cout << node << " replay ";
        if (rate > 0)
          std::cout << rate << " dmls/s, ";
        std::cout << lsn_rates[node] << " applied lsn/s\n";
      }
      std::cout << "wrote " << b_out << ".json, " << b_out << "_lag.csv, "
                << b_out << "_throughput.csv\n";
      return 0;
    }

    if (*c_vd) {
      std::string dir = require_fresh_dir(v_dir, "vd");
      imci::InProcessCluster cl(dir, cfg, static_cast<size_t>(v_ros));
      imci::VdSpec spec;
      spec.poll_ms = v_poll;
      spec.duration_s = v_seconds;
      spec.load_ops_per_s = v_rate;
      spec.seed = v_seed;
      imci::VdReport report = imci::measure_vd(cl, spec);
      cl.stop();
      write_text_file(v_out + ".json", report.to_json().dump(2) + "\n");
      {
        std::ofstream csv(v_out + ".csv", std::ios::trunc);
        report.write_csv(csv);
      }
      if (report.warning_empty) {
        std::cerr << "warning: no visibility samples collected\n";
      } else {
        std::printf("samples %zu\np50 %.3f ms\np90 %.3f ms\np99 %.3f ms\n"
                    "max %.3f ms\n",
                    report.samples_ms.size(), report.p50, report.p90,
                    report.p99, report.max);
      }
      std::cout << "wrote " << v_out << ".json, " << v_out << ".csv\n";
      return 0;
    }

    if (*c_scale) {
      imci::ScaleOutSpec spec;
      spec.n_new_nodes = s_nodes;
      spec.load_ops_per_s = s_rate;
      spec.warmup_s = s_warmup;
      spec.seed = s_seed;
      spec.tables = s_tables;
      spec.preload_rows = s_preload;
      spec.cfg = cfg;
      spec.data_dir = require_fresh_dir(s_dir, "scale");
      imci::ScaleOutReport report = imci::scale_out_demo(spec);
      write_text_file(s_out + ".json", report.to_json().dump(2) + "\n");
      for (const auto& n : report.nodes)
        std::printf("%-14s %-10s serving %.3fs caught-up %.3fs (replay "
                    "phase %.3fs, from csn %llu)\n",
                    n.node.c_str(), n.mode.c_str(), n.serving_s,
                    n.caught_up_s, n.catch_up_replay_s(),
                    static_cast<unsigned long long>(n.start_csn));
      if (report.rebuild) {
        const auto& n = *report.rebuild;
        std::printf("%-14s %-10s serving %.3fs caught-up %.3fs\n",
                    n.node.c_str(), n.mode.c_str(), n.serving_s,
                    n.caught_up_s);
      }
      std::cout << "wrote " << s_out << ".json\n";
      return 0;
    }

    if (*c_ckpt) {
      imci::RowStore store(k_dir, cfg);
      imci::RoEngine eng(k_dir, cfg, "ckpt", &store.log().bus());
      eng.start();
      if (!eng.wait_applied_lsn(store.log().written_lsn(), 600000))
        imci::raise(imci::ErrorCode::IoFailure, "replay did not finish");
      uint64_t csn = eng.checkpoint_now(true);
      eng.stop();
      std::cout << "checkpoint at csn " << csn << "\n";
      return 0;
    }

    if (*c_query) {
      imci::Consistency cons = q_cons == "strong"
                                   ? imci::Consistency::Strong
                                   : imci::Consistency::Eventual;
      if (!q_connect.empty()) {
        imci::LineSocket s = imci::connect_to(q_connect);
        s.write_line("EXEC " + q_cons + " " + q_stmt);
        std::string line;
        if (!s.read_line(line))
          imci::raise(imci::ErrorCode::ClusterDown, "proxy closed connection");
        if (line.rfind("ERR ", 0) == 0) {
          std::cerr << line << "\n";
          return 1;
        }
        std::cout << line << "\n";
        if (line.rfind("ROWS ", 0) == 0)
          while (s.read_line(line)) {
            std::cout << imci::wire::unescape(line) << "\n";
            if (line == "END") break;
          }
        return 0;
      }
      if (q_dir.empty())
        imci::raise(imci::ErrorCode::InvalidArgument,
                    "query needs --data-dir or --connect");
      imci::InProcessCluster cl(q_dir, cfg, 1);
      imci::ExecResult r = cl.exec(q_stmt, cons);
      if (r.is_write)
        std::cout << "SEQ " << r.write.commit_seq << "\n";
      else
        print_query_result(r.query);
      cl.stop();
      return 0;
    }

    if (*c_verify) {
      imci::VerifyOptions opts;
      opts.seed = f_seed;
      opts.scale = f_scale;
      opts.inject_fault = f_fault;
      opts.work_dir = f_work.empty() ? unique_tmp_dir("verify") : f_work;
      imci::VerifyReport report = imci::run_verify(opts);
      report.print(std::cout);
      if (!f_json.empty())
        write_text_file(f_json, report.to_json().dump(2) + "\n");
      return report.all_pass() ? 0 : 1;
    }
  } catch (const imci::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
