#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>
#include <regex>

#include "mpso/config.hpp"

using namespace mpso;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kFail = 1, kConfig = 2, kCorrelation = 3, kProtocol = 4, kIo = 5 };

// Flags shared by every session-running subcommand; applied on top of the config file.
struct SessionFlags {
  std::string config;
  std::vector<std::string> sets, random;
  std::string func, formula;
  std::optional<unsigned> m;
  std::optional<std::size_t> n;
  std::optional<u64> seed;
  bool ideal = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "flat key=value config file");
    app->add_option("--set", sets, "override a config key (key=value)");
    app->add_option("--func", func, "mpsi | mpsi-card | mpsi-card-sum | mpsu | mpsu-card | mpso | mpso-card");
    app->add_option("--formula", formula, "set formula over X1..Xm");
    app->add_option("--m", m, "party count");
    app->add_option("--n", n, "maximum set size");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--random", random, "random inputs, e.g. --random n=256 m=3");
    app->add_flag("--ideal-oprf", ideal, "replace the OPRF with a local ideal functionality");
  }

  RunConfig build() const {
    RunConfig rc;
    if (!config.empty()) load_config_file(rc, config);
    for (auto& r : random) {
      if (r.starts_with("n=")) apply_setting(rc, "random_n", r.substr(2));
      else apply_assignment(rc, r);
    }
    for (auto& s : sets) apply_assignment(rc, s);
    if (!func.empty()) rc.session.func = parse_func(func);
    if (!formula.empty()) rc.session.formula = formula;
    if (m) rc.session.m = *m;
    if (n) rc.session.n = *n;
    if (seed) rc.seed = *seed;
    if (ideal) rc.session.ideal_oprf = true;
    return rc;
  }
};

std::string join_elements(const std::vector<Element>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i].to_u64());
  return s;
}

void print_output(const SessionConfig& c, const PartyOutput& o) {
  std::cout << "func=" << func_name(c.func) << "\n";
  if (o.set) std::cout << "output=" << join_elements(*o.set) << "\n";
  if (o.cardinality) std::cout << "cardinality=" << *o.cardinality << "\n";
  if (o.sum) std::cout << "sum=" << *o.sum << "\n";
}

json stats_json(const PartyStats& s) {
  json d = json::object();
  for (auto& [st, h] : s.digests) d[stage_name(st)] = h;
  return {{"bytes_sent", s.bytes_sent}, {"bytes_recv", s.bytes_recv}, {"frames_sent", s.frames_sent}, {"digests", d}};
}

json output_json(const PartyOutput& o) {
  json j = json::object();
  if (o.set) {
    std::vector<u64> v;
    for (auto& x : *o.set) v.push_back(x.to_u64());
    j["output"] = v;
  }
  if (o.cardinality) j["cardinality"] = *o.cardinality;
  if (o.sum) j["sum"] = *o.sum;
  return j;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

const char* kStatsHeader = "party,bytes_sent,bytes_recv,frames_sent,seconds\n";

std::string stats_row(PartyId p, const PartyStats& s, double secs) {
  return std::to_string(p) + "," + std::to_string(s.bytes_sent) + "," + std::to_string(s.bytes_recv) + "," +
         std::to_string(s.frames_sent) + "," + std::to_string(secs) + "\n";
}

bool verify_against_oracle(const SessionConfig& c, const std::vector<PartyInput>& in, const PartyOutput& leader) {
  bool ok = matches_oracle(c, leader, oracle(c, in));
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string t;
  while (std::getline(ss, t, ','))
    if (!t.empty()) out.push_back(t);
  return out;
}

int cmd_run_local(const SessionFlags& f, bool verify, PartyId corrupt, const std::string& stats_out,
                  const std::string& json_out) {
  RunConfig rc = f.build();
  finalize(rc);
  auto inputs = load_all_inputs(rc);
  RunOptions opt;
  opt.corrupt = corrupt;
  auto r = run_local(rc.session, inputs, rc.master(), opt);
  print_output(rc.session, r.leader);
  std::cout << "seconds=" << r.seconds << "\n";
  if (!stats_out.empty()) {
    std::string csv = kStatsHeader;
    for (PartyId p = 1; p <= rc.session.m; ++p) csv += stats_row(p, r.stats[p], r.seconds);
    write_file(stats_out, csv);
  }
  if (!json_out.empty()) {
    json j = output_json(r.leader);
    j["func"] = func_name(rc.session.func);
    j["seconds"] = r.seconds;
    for (PartyId p = 1; p <= rc.session.m; ++p) j["parties"][std::to_string(p)] = stats_json(r.stats[p]);
    write_file(json_out, j.dump(2) + "\n");
  }
  if (verify && !verify_against_oracle(rc.session, inputs, r.leader)) return kFail;
  return kOk;
}

int cmd_party(const SessionFlags& f, PartyId id, const std::string& corr_dir, const std::string& stats_out,
              const std::string& json_out) {
  RunConfig rc = f.build();
  if (!corr_dir.empty()) rc.corr_dir = corr_dir;
  finalize(rc);
  const auto& c = rc.session;
  if (id == 0 || id > c.m) throw ConfigError("--party-id must be in [1, m]");
  std::vector<Endpoint> eps(c.m + 1);
  for (PartyId p = 1; p <= c.m; ++p) {
    auto it = rc.peers.find(p);
    if (it == rc.peers.end()) throw ConfigError("no endpoint for party " + std::to_string(p));
    eps[p] = it->second;
  }
  auto store = CorrelationStore::load(corr_path(rc.corr_dir, id));
  auto input = load_party_input(rc, id);
  Hello hello{id, c.m, c.session, c.digest()};
  auto t0 = std::chrono::steady_clock::now();
  auto mesh = connect_tcp_mesh(hello, eps, std::chrono::milliseconds(rc.timeout_ms));
  Party P(id, *mesh, store, party_seed(rc.master(), id));
  P.ideal_oprf = c.ideal_oprf;
  P.ideal_seed = ideal_seed(rc.master());
  PartyOutput out;
  try {
    out = run_party(P, c, input);
  } catch (...) {
    mesh->close();
    throw;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  mesh->close();
  auto st = collect_stats(*mesh);
  if (id == 1) print_output(c, out);
  else if (out.cardinality) std::cout << "cardinality=" << *out.cardinality << "\n";
  std::cout << "party=" << id << " bytes_sent=" << st.bytes_sent << " bytes_recv=" << st.bytes_recv
            << " seconds=" << secs << "\n";
  if (!stats_out.empty()) write_file(stats_out, std::string(kStatsHeader) + stats_row(id, st, secs));
  if (!json_out.empty()) {
    json j = output_json(out);
    j["party"] = id;
    j["func"] = func_name(c.func);
    j["stats"] = stats_json(st);
    write_file(json_out, j.dump(2) + "\n");
  }
  return kOk;
}

struct DealerFlags {
  std::string from_plan, out_dir = "corr";
  std::vector<std::string> sets;
  std::optional<u64> seed;
  unsigned parties = 3, field_bits = 64;
  u64 beaver = 0, bit_triples = 0, rots = 0, shuffle = 0;
};

int cmd_dealer(const DealerFlags& f) {
  CorrelationPlan plan;
  u64 seed = 1;
  if (!f.from_plan.empty()) {
    RunConfig rc;
    load_config_file(rc, f.from_plan);
    for (auto& s : f.sets) apply_assignment(rc, s);
    if (rc.session.n == 0) rc.session.n = rc.random_n;
    seed = rc.seed;
    plan = plan_session(rc.session);
  } else {
    if (f.parties < 2 || f.parties > 32) throw ConfigError("--parties must be in [2, 32]");
    plan.m = f.parties;
    plan.field_bits = f.field_bits;
    auto all = all_parties(f.parties);
    if (f.beaver) plan.beaver[party_mask(all)] += f.beaver;
    for (PartyId a = 1; a <= f.parties; ++a)
      for (PartyId b = 1; b <= f.parties; ++b) {
        if (a < b && f.bit_triples) plan.bit_triples[unordered_pair(a, b)] += f.bit_triples;
        if (a != b && f.rots) plan.rots[{a, b}] += f.rots;
      }
    if (f.shuffle) plan.shuffles.push_back({f.shuffle, {LaneKind::field}});
  }
  if (f.seed) seed = *f.seed;
  auto stores = deal(plan, dealer_seed(seed_from_u64(seed)));
  std::filesystem::create_directories(f.out_dir);
  for (PartyId p = 1; p <= plan.m; ++p) {
    auto path = corr_path(f.out_dir, p);
    stores[p].save(path);
    std::cout << "wrote " << path.string() << "\n";
  }
  return kOk;
}

int cmd_compile(const std::string& formula, unsigned m, std::size_t n, unsigned sigma) {
  if (m == 0) {
    std::regex var("X([0-9]+)");
    for (auto it = std::sregex_iterator(formula.begin(), formula.end(), var); it != std::sregex_iterator(); ++it)
      m = std::max(m, static_cast<unsigned>(std::stoul((*it)[1])));
  }
  auto expr = parse(formula, m);
  auto pred = expr_to_predicate(expr);
  auto cpf = to_cpf(pred);
  auto cost = cpf_cost(cpf, n, sigma);
  std::cout << "formula=" << to_string(expr) << "\n";
  std::cout << "predicate=" << to_string(pred) << "\n";
  std::cout << "s=" << cpf.s() << "\n";
  for (std::size_t i = 0; i < cpf.s(); ++i) std::cout << "sub." << i + 1 << "=" << to_string(cpf.subs[i]) << "\n";
  std::cout << "total_or=" << cost.total_or << "\n";
  std::cout << "min_field_bits=" << cost.min_field_bits << "\n";
  std::cout << "mpso_field_bits=" << cost.mpso_field_bits << "\n";
  return kOk;
}

int cmd_bench(const SessionFlags& base, const std::string& funcs, const std::string& ms, const std::string& ns,
              unsigned reps, const std::string& stats_out) {
  std::string csv = "func,m,n,rep,seconds,leader_bytes_sent,leader_bytes_recv,max_client_bytes_sent,total_bytes\n";
  std::cout << csv << std::flush;
  for (auto& fn : split(funcs))
    for (auto& m : split(ms))
      for (auto& n : split(ns))
        for (unsigned rep = 0; rep < reps; ++rep) {
          RunConfig rc = base.build();
          rc.session.func = parse_func(fn);
          apply_setting(rc, "m", m);
          apply_setting(rc, "n", n);
          rc.random_n = rc.session.n;
          if (is_mpso_family(rc.session.func) && rc.session.formula.empty()) throw ConfigError("bench of mpso needs --formula");
          finalize(rc);
          auto r = run_local(rc.session, load_all_inputs(rc), rc.master());
          u64 max_client = 0, total = 0;
          for (PartyId p = 1; p <= rc.session.m; ++p) {
            total += r.stats[p].bytes_sent;
            if (p > 1) max_client = std::max(max_client, r.stats[p].bytes_sent);
          }
          std::string row = fn + "," + m + "," + n + "," + std::to_string(rep) + "," + std::to_string(r.seconds) + "," +
                            std::to_string(r.stats[1].bytes_sent) + "," + std::to_string(r.stats[1].bytes_recv) + "," +
                            std::to_string(max_client) + "," + std::to_string(total) + "\n";
          std::cout << row << std::flush;
          csv += row;
        }
  if (!stats_out.empty()) write_file(stats_out, csv);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-party private set operations toolkit"};
  app.require_subcommand(1);

  std::string stats_out, json_out, corr_dir;

  auto* run = app.add_subcommand("run-local", "run all parties in this process");
  SessionFlags run_f;
  bool run_verify = false;
  run_f.attach(run);
  run->add_flag("--verify", run_verify, "compare with the plaintext oracle");
  run->add_option("--stats-out", stats_out, "per-party CSV stats");
  run->add_option("--json-out", json_out, "JSON report with transcript digests");

  auto* ver = app.add_subcommand("verify", "run locally and compare with the plaintext oracle");
  SessionFlags ver_f;
  PartyId corrupt = 0;
  ver_f.attach(ver);
  ver->add_option("--corrupt-share", corrupt, "fault injection: party whose opened shares are perturbed");
  ver->add_option("--stats-out", stats_out, "per-party CSV stats");

  auto* party = app.add_subcommand("party", "join a TCP session as one party");
  SessionFlags party_f;
  PartyId party_id = 0;
  party_f.attach(party);
  party->add_option("--party-id", party_id, "this party's index")->required();
  party->add_option("--corr-dir", corr_dir, "directory with dealt correlation files");
  party->add_option("--stats-out", stats_out, "CSV stats");
  party->add_option("--json-out", json_out, "JSON report with transcript digests");

  auto* dealer = app.add_subcommand("dealer", "deal correlated randomness to files");
  DealerFlags dealer_f;
  dealer->add_option("--from-plan", dealer_f.from_plan, "size the correlations for this session config");
  dealer->add_option("--set", dealer_f.sets, "override a config key (key=value)");
  dealer->add_option("--out-dir", dealer_f.out_dir, "output directory");
  dealer->add_option("--seed", dealer_f.seed, "master seed");
  dealer->add_option("--parties", dealer_f.parties, "party count without --from-plan");
  dealer->add_option("--field-bits", dealer_f.field_bits, "16, 64 or 128");
  dealer->add_option("--beaver", dealer_f.beaver, "Beaver triples shared by all parties");
  dealer->add_option("--bit-triples", dealer_f.bit_triples, "bit triples per party pair");
  dealer->add_option("--rots", dealer_f.rots, "random OTs per ordered party pair");
  dealer->add_option("--shuffle", dealer_f.shuffle, "length of one single-lane shuffle correlation");

  auto* compile = app.add_subcommand("compile", "compile a set formula to its CPF");
  std::string formula;
  unsigned cm = 0, csigma = 40;
  std::size_t cn = 1024;
  compile->add_option("formula", formula, "formula over X1..Xm")->required();
  compile->add_option("--m", cm, "party count (default: largest index used)");
  compile->add_option("--n", cn, "set size for the cost estimate");
  compile->add_option("--sigma", csigma, "statistical security parameter");

  auto* bench = app.add_subcommand("bench", "time a matrix of in-process runs, CSV on stdout");
  SessionFlags bench_f;
  std::string bfuncs = "mpsi", bms = "3", bns = "256";
  unsigned reps = 1;
  bench_f.attach(bench);
  bench->add_option("--funcs", bfuncs, "comma-separated functionalities");
  bench->add_option("--ms", bms, "comma-separated party counts");
  bench->add_option("--ns", bns, "comma-separated set sizes");
  bench->add_option("--reps", reps, "repetitions per cell");
  bench->add_option("--stats-out", stats_out, "CSV copy of the table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run_local(run_f, run_verify, 0, stats_out, json_out);
    if (*ver) return cmd_run_local(ver_f, true, corrupt, stats_out, "");
    if (*party) return cmd_party(party_f, party_id, corr_dir, stats_out, json_out);
    if (*dealer) return cmd_dealer(dealer_f);
    if (*compile) return cmd_compile(formula, cm, cn, csigma);
    if (*bench) return cmd_bench(bench_f, bfuncs, bms, bns, reps, stats_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error (protocol): " << e.what() << "\n";
    return kProtocol;
  }
  return kOk;
}
