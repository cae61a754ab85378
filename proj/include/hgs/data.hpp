#pragma once

#include <string>
#include <vector>

#include "hgs/dataset.hpp"
#include "hgs/graph.hpp"
#include "hgs/rng.hpp"

namespace hgs::data {

// ---- synthetic generator -----------------------------------------------------

struct SynthOptions {
  graph::SynthGraphKind kind = graph::SynthGraphKind::Refined;
  graph::SparsityRegime regime = graph::SparsityRegime::TrueSparsity;
  int size = 100;
  uint64_t seed = 0;
  double noise_scale = 0.5;  // input-noise SD; 0 gives the noise-free recurrence
};

/// Port of the synthetic generator: 60 steps, signal input
/// exp(1-t/600)/100 + N(0,0.5), redundant N(0,0.5) inputs (3 refined / 6
/// comprehensive), state recurrence v <- v + 0.05*(4 x1 - 0.5 (v-1)) with the
/// quasi-sparsity extra terms, one standard-normal channel appended last.
/// Draw order per instance: signal noise, redundant inputs in index order,
/// appended noise channel.
Dataset gen_synthetic(const SynthOptions& opt);

// ---- event streams (ingestion) ---------------------------------------------------

struct Event {
  double time = 0;   // minutes
  double value = 0;  // stream-specific unit
};

struct EventStream {
  std::vector<Event> basal;       // U/hour
  std::vector<Event> bolus;       // U per dose
  std::vector<Event> carbs;       // grams
  std::vector<Event> heart_rate;  // bpm
  std::vector<Event> steps;       // count
  std::vector<Event> cgm;         // mg/dL, 5-min cadence
};

/// Folds overlapping boluses (delivery at 1.5 U/min) into the earlier dose,
/// recursively, returning a non-overlapping list.
std::vector<Event> merge_bolus(std::vector<Event> bolus);

/// Piecewise-constant rate with exact integrals; value v[i] holds on
/// [t[i], t[i+1]), the last value extends, zero before t[0].
struct RateFunction {
  std::vector<double> t, v;
  double value_at(double time) const;
  double integral(double a, double b) const;
  /// Mean over [a, a+width).
  double window_average(double a, double width) const { return integral(a, a + width) / width; }
};

RateFunction basal_rate(const std::vector<Event>& basal);         // a_i/60 U/min steps
RateFunction bolus_rate(const std::vector<Event>& merged_bolus);  // 1.5 U/min on windows
RateFunction insulin_rate(const std::vector<Event>& basal, const std::vector<Event>& merged_bolus);
RateFunction carb_rate(const std::vector<Event>& carbs);          // 45000 mg/min per active meal

struct VitalSample {
  double value = 0;
  bool carried = false;  // no sample in [t, t+5]; nearest value carried
};

/// Forward-looking 5-minute window mean, endpoints inclusive.
VitalSample vital_at(const std::vector<Event>& samples, double t, double window = 5.0);

// ---- discretization -----------------------------------------------------------------

struct DiscretizeOptions {
  int total_steps = 54;
  int past_steps = 42;  // p = past_steps - 1, q = total_steps - past_steps
  double dt = 5.0;      // minutes
};

/// Grid anchored to the CGM stamps; emits (G, IIR, M, H, V) rows and windows
/// them into past/future. Rejects CGM gaps.
Instance discretize(const EventStream& ev, const DiscretizeOptions& opt = {});

/// Channel names discretize() produces, in order.
std::vector<std::string> discretize_input_channels();

// ---- CSV ingestion ---------------------------------------------------------------------

/// CSV columns: stream,time,value. Times are ISO-8601 (onset required) or
/// plain minutes. Streams: cgm, basal, bolus, carbs, heart_rate, steps.
EventStream parse_event_csv(const std::string& text, const std::string& onset_iso = "");

double parse_iso8601_minutes(const std::string& iso);

// ---- dataset files -----------------------------------------------------------------

/// JSON-lines: a header object then one Instance per line.
std::string dataset_to_jsonl(const Dataset& d);
Dataset dataset_from_jsonl(const std::string& text);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// ---- UVA-Padova cohort simulator ------------------------------------------------------

struct UvaSimOptions {
  int size = 50;
  uint64_t seed = 7;
  double sim_dt = 0.5;  // Euler step of the simulator, minutes
};

/// Synthetic CGM cohort from the S2013 equations with plausible parameters:
/// randomized meals, boluses and basal rates per instance, 54 stamps at
/// 5 minutes, channels (delta, IIR, Hinf) named after the graph inputs.
Dataset simulate_uva_cohort(const UvaSimOptions& opt);

}  // namespace hgs::data
