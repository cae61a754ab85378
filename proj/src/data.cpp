#include "hgs/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hgs::data {

Dataset gen_synthetic(const SynthOptions& opt) {
  if (opt.size < 1) throw ValidationError("gen_synthetic: size must be >= 1");
  const int n = 60;
  const int redundant = opt.kind == graph::SynthGraphKind::Refined ? 3 : 6;
  const int m = 1 + redundant + 1;  // signal, redundant, appended noise
  const bool quasi = opt.regime == graph::SparsityRegime::QuasiSparsity;
  Rng rng(opt.seed);

  Dataset d;
  d.meta.obs_channels = {"s1"};
  for (int j = 1; j <= 1 + redundant; ++j) d.meta.input_channels.push_back("x" + std::to_string(j));
  d.meta.input_channels.push_back("noise");
  d.meta.dt = 1.0;

  for (int k = 0; k < opt.size; ++k) {
    Mat x(n, m);
    for (int i = 0; i < n; ++i) {
      double t = i + 1;
      x.at(i, 0) = std::exp(1.0 - t / 600.0) / 100.0 + rng.normal(0.0, opt.noise_scale);
    }
    for (int j = 1; j <= redundant; ++j)
      for (int i = 0; i < n; ++i) x.at(i, j) = rng.normal(0.0, opt.noise_scale);
    for (int i = 0; i < n; ++i) x.at(i, m - 1) = rng.normal(0.0, 1.0);

    const double dt = 5e-2;
    Mat v(n, 1);
    double cur = 0.0;
    for (int i = 0; i < n; ++i) {
      double drift = 4.0 * x.at(i, 0) - 0.5 * (cur - 1.0);
      if (quasi) {
        if (opt.kind == graph::SynthGraphKind::Refined) {
          drift += -0.4 * x.at(i, 1) + 0.04 * x.at(i, 2) - 0.004 * x.at(i, 3);
        } else {
          drift += -4e-1 * x.at(i, 1) + 4e-2 * x.at(i, 2) - 4e-3 * x.at(i, 3) +
                   4e-4 * x.at(i, 4) - 4e-5 * x.at(i, 5);
        }
      }
      cur += dt * drift;
      v.at(i, 0) = cur;
    }

    Instance inst;
    inst.past_obs = Mat(1, 1, 0.0);  // zero initial condition at t_0
    inst.past_inputs = Mat(0, m);
    inst.future_inputs = x;
    inst.future_obs = v;
    inst.dt = 1.0;
    d.instances.push_back(std::move(inst));
  }
  return d;
}

// ---- event streams ------------------------------------------------------------------

std::vector<Event> merge_bolus(std::vector<Event> bolus) {
  for (const auto& b : bolus)
    if (b.value < 0) throw ValidationError("merge_bolus: negative dose");
  size_t i = 0;
  while (i + 1 < bolus.size()) {
    if (bolus[i + 1].time < bolus[i].time + bolus[i].value / 1.5) {
      bolus[i].value += bolus[i + 1].value;
      bolus.erase(bolus.begin() + i + 1);
    } else {
      ++i;
    }
  }
  return bolus;
}

double RateFunction::value_at(double time) const {
  if (t.empty() || time < t.front()) return 0.0;
  auto it = std::upper_bound(t.begin(), t.end(), time);
  return v[it - t.begin() - 1];
}

double RateFunction::integral(double a, double b) const {
  if (b <= a || t.empty()) return 0.0;
  double total = 0.0;
  // segment [t[i], t[i+1]) carries v[i]; last segment extends to +inf
  for (size_t i = 0; i < t.size(); ++i) {
    double lo = std::max(a, t[i]);
    double hi = i + 1 < t.size() ? std::min(b, t[i + 1]) : b;
    if (hi > lo) total += v[i] * (hi - lo);
  }
  return total;
}

namespace {

// Build a step function from (time, delta-to-add) jump points.
RateFunction from_jumps(std::vector<std::pair<double, double>> jumps) {
  std::sort(jumps.begin(), jumps.end());
  RateFunction f;
  double level = 0.0;
  for (size_t i = 0; i < jumps.size();) {
    double time = jumps[i].first;
    while (i < jumps.size() && jumps[i].first == time) level += jumps[i++].second;
    if (!f.t.empty() && f.t.back() == time)
      f.v.back() = level;
    else {
      f.t.push_back(time);
      f.v.push_back(level);
    }
  }
  return f;
}

void require_sorted(const std::vector<Event>& ev, const char* what) {
  for (size_t i = 1; i < ev.size(); ++i)
    if (ev[i].time < ev[i - 1].time)
      throw ValidationError(std::string(what) + ": events must be time-sorted");
}

}  // namespace

RateFunction basal_rate(const std::vector<Event>& basal) {
  require_sorted(basal, "basal_rate");
  RateFunction f;
  for (const auto& e : basal) {
    if (!f.t.empty() && f.t.back() == e.time) {
      f.v.back() = e.value / 60.0;
      continue;
    }
    f.t.push_back(e.time);
    f.v.push_back(e.value / 60.0);  // U/hour -> U/min
  }
  return f;
}

RateFunction bolus_rate(const std::vector<Event>& merged_bolus) {
  require_sorted(merged_bolus, "bolus_rate");
  std::vector<std::pair<double, double>> jumps;
  for (const auto& e : merged_bolus) {
    if (e.value <= 0) continue;
    jumps.push_back({e.time, 1.5});
    jumps.push_back({e.time + e.value / 1.5, -1.5});
  }
  return from_jumps(std::move(jumps));
}

RateFunction insulin_rate(const std::vector<Event>& basal, const std::vector<Event>& merged_bolus) {
  RateFunction fa = basal_rate(basal);
  RateFunction fb = bolus_rate(merged_bolus);
  // merge breakpoints
  std::vector<double> ts;
  ts.insert(ts.end(), fa.t.begin(), fa.t.end());
  ts.insert(ts.end(), fb.t.begin(), fb.t.end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  RateFunction f;
  for (double time : ts) {
    f.t.push_back(time);
    f.v.push_back(fa.value_at(time) + fb.value_at(time));
  }
  return f;
}

RateFunction carb_rate(const std::vector<Event>& carbs) {
  std::vector<Event> sorted = carbs;
  std::sort(sorted.begin(), sorted.end(),
            [](const Event& a, const Event& b) { return a.time < b.time; });
  std::vector<std::pair<double, double>> jumps;
  for (const auto& e : sorted) {
    if (e.value <= 0) throw ValidationError("carb_rate: grams must be positive");
    jumps.push_back({e.time, 45000.0});
    jumps.push_back({e.time + e.value / 45.0, -45000.0});  // grams / (45 g/min)
  }
  return from_jumps(std::move(jumps));
}

VitalSample vital_at(const std::vector<Event>& samples, double t, double window) {
  VitalSample out;
  if (samples.empty()) return {0.0, true};
  double sum = 0.0;
  int count = 0;
  for (const auto& e : samples) {
    if (e.time >= t && e.time <= t + window) {
      sum += e.value;
      ++count;
    }
  }
  if (count > 0) return {sum / count, false};
  // carry the nearest sample
  const Event* best = &samples.front();
  for (const auto& e : samples)
    if (std::fabs(e.time - t) < std::fabs(best->time - t)) best = &e;
  return {best->value, true};
}

Instance discretize(const EventStream& ev, const DiscretizeOptions& opt) {
  const int n = opt.total_steps;
  if (static_cast<int>(ev.cgm.size()) != n)
    throw ValidationError("discretize: need exactly " + std::to_string(n) + " CGM stamps, got " +
                          std::to_string(ev.cgm.size()));
  for (int i = 1; i < n; ++i)
    if (std::fabs(ev.cgm[i].time - ev.cgm[i - 1].time - opt.dt) > 1e-9)
      throw ValidationError("discretize: CGM gap between stamps " + std::to_string(i - 1) +
                            " and " + std::to_string(i));

  RateFunction iir = insulin_rate(ev.basal, merge_bolus(ev.bolus));
  RateFunction carbs = carb_rate(ev.carbs);

  Mat features(n, 4);  // IIR, M, H, V
  for (int i = 0; i < n; ++i) {
    double t = ev.cgm[i].time;
    features.at(i, 0) = iir.window_average(t, opt.dt);
    features.at(i, 1) = carbs.window_average(t, opt.dt);
    features.at(i, 2) = vital_at(ev.heart_rate, t).value;
    features.at(i, 3) = vital_at(ev.steps, t).value;
  }

  const int p = opt.past_steps - 1;
  const int q = n - opt.past_steps;
  Instance inst;
  inst.past_obs = Mat(p + 1, 1);
  for (int i = 0; i <= p; ++i) inst.past_obs.at(i, 0) = ev.cgm[i].value;
  inst.past_inputs = Mat(p, 4);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < 4; ++j) inst.past_inputs.at(i, j) = features.at(i, j);
  inst.future_inputs = Mat(q, 4);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < 4; ++j) inst.future_inputs.at(i, j) = features.at(p + i, j);
  inst.future_obs = Mat(q, 1);
  for (int i = 0; i < q; ++i) inst.future_obs.at(i, 0) = ev.cgm[opt.past_steps + i].value;
  inst.t0 = ev.cgm[p].time;
  inst.dt = opt.dt;
  return inst;
}

std::vector<std::string> discretize_input_channels() { return {"IIR", "M", "H", "V"}; }

// ---- CSV ingestion ---------------------------------------------------------------

double parse_iso8601_minutes(const std::string& iso) {
  int year, month, day, hour, minute;
  double second = 0;
  char sep;
  std::istringstream ss(iso);
  ss >> year;
  ss >> sep >> month >> sep >> day >> sep >> hour >> sep >> minute;
  if (ss.peek() == ':') ss >> sep >> second;
  if (ss.fail()) throw ValidationError("bad ISO-8601 time: " + iso);
  // days-from-civil
  int y = year - (month <= 2);
  int era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = static_cast<unsigned>(y - era * 400);
  unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  long days = era * 146097L + static_cast<long>(doe) - 719468L;
  return days * 1440.0 + hour * 60.0 + minute + second / 60.0;
}

EventStream parse_event_csv(const std::string& text, const std::string& onset_iso) {
  EventStream ev;
  double onset = 0.0;
  bool have_onset = false;
  if (!onset_iso.empty()) {
    onset = parse_iso8601_minutes(onset_iso);
    have_onset = true;
  }
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string stream, time_s, value_s;
    if (!std::getline(ls, stream, ',') || !std::getline(ls, time_s, ',') ||
        !std::getline(ls, value_s))
      throw ValidationError("bad CSV at line " + std::to_string(lineno));
    if (stream == "stream") continue;  // header
    double t;
    if (time_s.find('T') != std::string::npos) {
      if (!have_onset)
        throw ValidationError("ISO-8601 times require an onset (line " + std::to_string(lineno) +
                              ")");
      t = parse_iso8601_minutes(time_s) - onset;
    } else {
      t = std::stod(time_s);
    }
    Event e{t, std::stod(value_s)};
    if (stream == "cgm")
      ev.cgm.push_back(e);
    else if (stream == "basal")
      ev.basal.push_back(e);
    else if (stream == "bolus")
      ev.bolus.push_back(e);
    else if (stream == "carbs")
      ev.carbs.push_back(e);
    else if (stream == "heart_rate" || stream == "hr")
      ev.heart_rate.push_back(e);
    else if (stream == "steps")
      ev.steps.push_back(e);
    else
      throw ValidationError("unknown stream '" + stream + "' at line " + std::to_string(lineno));
  }
  auto by_time = [](const Event& a, const Event& b) { return a.time < b.time; };
  std::sort(ev.cgm.begin(), ev.cgm.end(), by_time);
  std::sort(ev.basal.begin(), ev.basal.end(), by_time);
  std::sort(ev.bolus.begin(), ev.bolus.end(), by_time);
  std::sort(ev.carbs.begin(), ev.carbs.end(), by_time);
  std::sort(ev.heart_rate.begin(), ev.heart_rate.end(), by_time);
  std::sort(ev.steps.begin(), ev.steps.end(), by_time);
  return ev;
}

// ---- dataset files -----------------------------------------------------------------

namespace {

nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const nlohmann::json& j, int cols_hint = 0) {
  int rows = static_cast<int>(j.size());
  int cols = rows > 0 ? static_cast<int>(j[0].size()) : cols_hint;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols)
      throw ValidationError("ragged matrix in dataset file");
    for (int c = 0; c < cols; ++c) m.at(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  nlohmann::json header;
  header["format"] = "hgs-dataset";
  header["version"] = 1;
  header["obs_channels"] = d.meta.obs_channels;
  header["input_channels"] = d.meta.input_channels;
  header["dt"] = d.meta.dt;
  out += header.dump();
  out += '\n';
  for (const auto& inst : d.instances) {
    nlohmann::json j;
    j["past_obs"] = mat_json(inst.past_obs);
    j["past_inputs"] = mat_json(inst.past_inputs);
    j["future_inputs"] = mat_json(inst.future_inputs);
    j["future_obs"] = mat_json(inst.future_obs);
    j["t0"] = inst.t0;
    j["dt"] = inst.dt;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_jsonl(const std::string& text) {
  Dataset d;
  std::istringstream ss(text);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (first && j.contains("format")) {
      if (j.value("format", "") != "hgs-dataset" || j.value("version", 0) != 1)
        throw ValidationError("not a version-1 hgs-dataset file");
      d.meta.obs_channels = j.value("obs_channels", std::vector<std::string>{});
      d.meta.input_channels = j.value("input_channels", std::vector<std::string>{});
      d.meta.dt = j.value("dt", 1.0);
      first = false;
      continue;
    }
    first = false;
    Instance inst;
    inst.past_obs = mat_from_json(j.at("past_obs"));
    inst.past_inputs = mat_from_json(j.at("past_inputs"));
    inst.future_inputs = mat_from_json(j.at("future_inputs"));
    inst.future_obs = mat_from_json(j.at("future_obs"));
    inst.t0 = j.value("t0", 0.0);
    inst.dt = j.value("dt", 1.0);
    if (inst.past_inputs.cols == 0 && inst.past_inputs.rows == 0)
      inst.past_inputs.cols = inst.future_inputs.cols;
    d.instances.push_back(std::move(inst));
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << dataset_to_jsonl(d);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return dataset_from_jsonl(ss.str());
}

}  // namespace hgs::data
