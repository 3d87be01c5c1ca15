#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "softbci/config.hpp"
#include "softbci/dsp.hpp"
#include "softbci/embodiment.hpp"
#include "softbci/error.hpp"
#include "softbci/link.hpp"
#include "softbci/mapping.hpp"
#include "softbci/orchestrator.hpp"
#include "softbci/signal_source.hpp"

namespace py = pybind11;
using namespace softbci;

namespace {

RunConfig config_from(const std::map<std::string, std::string>& settings) {
  RunConfig cfg;
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  return cfg;
}

py::dict reading_dict(const AlphaReading& r) {
  py::dict d;
  d["t"] = r.t;
  d["p_alpha"] = r.p_alpha;
  d["a_psd"] = r.a_psd;
  d["gated"] = r.gated;
  d["peak_hz"] = r.peak_hz;
  d["peak_psd"] = r.peak_psd;
  return d;
}

SpectrumFrame spectrum_from(const std::vector<double>& psd) {
  SpectrumFrame s;
  s.psd = psd;
  s.freq.resize(psd.size());
  const double df = kEegRateHz / static_cast<double>(kWindowLength);
  for (std::size_t k = 0; k < psd.size(); ++k) s.freq[k] = static_cast<double>(k) * df;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "softbci native core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
  py::register_exception<SignalIntegrityError>(m, "SignalIntegrityError", base.ptr());
  py::register_exception<CalibrationError>(m, "CalibrationError", base.ptr());
  py::register_exception<SimulationFault>(m, "SimulationFault", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("EEG_RATE_HZ") = kEegRateHz;
  m.attr("WINDOW_LENGTH") = kWindowLength;
  m.attr("WINDOW_HOP") = kWindowHop;

  m.def(
      "synthesize",
      [](const std::vector<std::pair<std::string, double>>& segments, std::uint64_t seed,
         double noise_amp) {
        Scenario sc;
        for (const auto& [eyes, dur] : segments) {
          auto e = parse_eyes(eyes);
          if (!e) throw ConfigError("eyes must be open or closed");
          sc.push_back({*e, dur});
        }
        validate(sc);
        SynthParams p;
        p.rng_seed = seed;
        p.noise_amp = noise_amp;
        p.validate();
        SyntheticEeg gen(p, sc);
        const auto n = static_cast<std::size_t>(std::llround(total_duration(sc) * kEegRateHz));
        std::vector<double> out(n);
        for (auto& v : out) v = gen.next_sample().v;
        return out;
      },
      py::arg("segments"), py::arg("seed") = 1, py::arg("noise_amp") = 4.0,
      "Synthetic EEG in uV for a list of (eyes, seconds) segments.");

  m.def(
      "bandpass",
      [](const std::vector<double>& x, double low, double high, int order) {
        BandpassFilter f({low, high, order, kEegRateHz});
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = f.step(x[i]);
        return y;
      },
      py::arg("x"), py::arg("low_cut") = 1.0, py::arg("high_cut") = 40.0,
      py::arg("order") = BandpassDesign{}.order);

  m.def(
      "filter_gain",
      [](double f_hz, double low, double high, int order) {
        BandpassFilter f({low, high, order, kEegRateHz});
        return std::abs(f.response(f_hz));
      },
      py::arg("f_hz"), py::arg("low_cut") = 1.0, py::arg("high_cut") = 40.0,
      py::arg("order") = BandpassDesign{}.order);

  m.def(
      "compute_psd",
      [](const std::vector<double>& frame, bool hann) {
        auto s = compute_psd(frame, hann ? WindowKind::Hann : WindowKind::Rectangular);
        return std::make_pair(s.freq, s.psd);
      },
      py::arg("frame"), py::arg("hann") = false, "Returns (freq, psd) for a 500-sample frame.");

  m.def(
      "detect_alpha",
      [](const std::vector<double>& psd, double p_ref, double threshold) {
        Calibration cal{p_ref, threshold};
        cal.validate();
        if (psd.size() != kWindowLength / 2 + 1) {
          throw ContractViolation("psd must have 251 bins on the 0.5 Hz grid");
        }
        return reading_dict(detect_alpha(spectrum_from(psd), cal));
      },
      py::arg("psd"), py::arg("p_ref"), py::arg("threshold"));

  m.def(
      "normalize", [](double p, double p_ref) { return normalize(p, {p_ref, 0.0}); },
      py::arg("p_alpha"), py::arg("p_ref"));

  m.def(
      "calibrate",
      [](const std::vector<double>& x) {
        std::vector<EegSample> rec(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          rec[i] = {static_cast<double>(i) / kEegRateHz, x[i]};
        }
        const auto cal = calibrate(rec);
        return std::make_pair(cal.p_ref, cal.threshold);
      },
      py::arg("recording"), "Returns (p_ref, threshold) for an eyes-closed recording.");

  m.def(
      "to_duty", [](double a) { return to_duty(a).duty; }, py::arg("a_psd"));
  m.def(
      "to_flower_command",
      [](double a) {
        const auto c = to_flower_command(a);
        return std::make_tuple(c.setpoint, c.t_inflation, c.t_deflation);
      },
      py::arg("a_psd"), "Returns (setpoint_kpa, t_inflation_s, t_deflation_s).");

  m.def("encode_frame", [](int a) { return py::bytes(encode_frame(a)); }, py::arg("a_psd"));

  py::class_<FrameDecoder>(m, "FrameDecoder")
      .def(py::init<>())
      .def("decode", [](FrameDecoder& d, py::bytes chunk) {
        return d.decode_frame(std::string(chunk));
      })
      .def_property_readonly("error_count", &FrameDecoder::error_count)
      .def_property_readonly("frames_decoded", &FrameDecoder::frames_decoded);

  m.def(
      "settle",
      [](double setpoint, double seconds) {
        FlowerRigParams params;
        FlowerRig rig(params);
        FlowerCommand cmd{setpoint, seconds, seconds + 0.5};
        std::vector<double> trace;
        const auto ticks = static_cast<int>(std::lround(seconds / kControlPeriod));
        for (int i = 0; i < ticks; ++i) {
          rig.tick(i == 0 ? std::optional(cmd) : std::nullopt);
          trace.push_back(rig.plant().pressure());
        }
        return trace;
      },
      py::arg("setpoint"), py::arg("seconds") = 2.8,
      "True-pressure trace of one inflation toward `setpoint` from the default start.");

  m.def(
      "run_json",
      [](const std::map<std::string, std::string>& settings) {
        RunConfig cfg = config_from(settings);
        py::gil_scoped_release release;
        return run(cfg).to_json().dump();
      },
      py::arg("settings"), "Runs the pipeline; settings use the config-file keys.");

  m.def(
      "calibrate_json",
      [](const std::map<std::string, std::string>& settings) {
        const auto cal = calibrate_cmd(config_from(settings));
        return std::make_pair(cal.p_ref, cal.threshold);
      },
      py::arg("settings"));

  m.def("export_figures", &export_figures, py::arg("run_output_dir"));
  m.def("config_keys", &config_keys);
}
