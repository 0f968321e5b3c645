#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smh/analysis.hpp"
#include "smh/driver.hpp"
#include "smh/errors.hpp"
#include "smh/io.hpp"
#include "smh/simulator.hpp"
#include "smh/smh.hpp"
#include "smh/wire.hpp"

namespace py = pybind11;
using namespace smh;

namespace {

py::object fraction(const Rational& r) {
  static const py::object cls = py::module_::import("fractions").attr("Fraction");
  return cls(r.numerator(), r.denominator());
}

Rational rational(const py::handle& value) {
  const py::object f = py::module_::import("fractions").attr("Fraction")(value);
  return Rational(f.attr("numerator").cast<std::int64_t>(), f.attr("denominator").cast<std::int64_t>());
}

EstimateMode parse_mode(const std::string& mode) {
  if (mode == "raw") return EstimateMode::Raw;
  if (mode == "curve") return EstimateMode::CurveInverted;
  throw InvalidParameter("mode must be 'raw' or 'curve'");
}

ProtocolKind kind_of(const std::string& text) {
  const auto kind = parse_kind(text);
  if (!kind) throw InvalidParameter("unknown protocol kind '" + text + "'");
  return *kind;
}

HashVector vector_of(const std::vector<std::uint32_t>& h, int k) { return HashVector(k, h); }

py::dict estimate_dict(const DistanceEstimate& e) {
  py::dict d;
  d["estimate"] = e.value ? py::cast(*e.value) : py::none();
  d["saturated"] = e.saturated();
  d["mean_lee"] = fraction(e.mean_lee);
  return d;
}

py::dict report_dict(const UniformityReport& r) {
  py::dict d;
  d["k"] = r.k;
  d["samples"] = r.samples;
  d["histogram"] = r.histogram;
  d["chi_square"] = r.chi_square;
  d["critical_value"] = r.critical_value;
  d["passed"] = r.pass;
  return d;
}

}  // namespace

PYBIND11_MODULE(pysmh, m) {
  m.doc() = "Secure modular hashing: keyed hashes whose mean Lee distance estimates Euclidean distance.";

  static py::exception<Error> base(m, "Error");
  static py::exception<InvalidParameter> invalid_parameter(m, "InvalidParameter", base.ptr());
  static py::exception<InvalidInput> invalid_input(m, "InvalidInput", base.ptr());
  static py::exception<DimensionMismatch> dimension_mismatch(m, "DimensionMismatch", base.ptr());
  static py::exception<ProtocolViolation> protocol_violation(m, "ProtocolViolation", base.ptr());
  static py::exception<DecodeFailure> decode_error(m, "DecodeError", base.ptr());
  static py::exception<TransportClosed> transport_closed(m, "TransportClosed", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidParameter& e) {
      PyErr_SetString(invalid_parameter.ptr(), e.what());
    } catch (const InvalidInput& e) {
      PyErr_SetString(invalid_input.ptr(), e.what());
    } catch (const DimensionMismatch& e) {
      PyErr_SetString(dimension_mismatch.ptr(), e.what());
    } catch (const ProtocolViolation& e) {
      PyErr_SetString(protocol_violation.ptr(), e.what());
    } catch (const DecodeFailure& e) {
      PyErr_SetString(decode_error.ptr(), e.what());
    } catch (const TransportClosed& e) {
      PyErr_SetString(transport_closed.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  m.attr("DEFAULT_DELTA") = kDefaultDelta;

  m.def("plan", [](double threshold, double epsilon, int beta) {
    const ProtocolParams p = plan_parameters(threshold, epsilon, beta);
    py::dict d;
    d["k"] = p.k;
    d["M"] = p.M;
    d["padding"] = p.padding;
    d["epsilon_bias"] = p.epsilon_bias;
    d["epsilon_stat"] = p.epsilon_stat;
    return d;
  }, py::arg("threshold"), py::arg("epsilon"), py::arg("beta") = 10);
  m.def("plan_k", &plan_k, py::arg("threshold"), py::arg("epsilon_bias"));
  m.def("plan_M", &plan_M, py::arg("k"), py::arg("epsilon_stat"), py::arg("beta"));

  m.def("expected_lee", &expected_lee, py::arg("distance"), py::arg("k"), py::arg("delta") = kDefaultDelta);
  m.def("expected_lee_bounds", &expected_lee_bounds, py::arg("distance"), py::arg("k"),
        py::arg("delta") = kDefaultDelta);
  m.def("bias_bound", &bias_bound, py::arg("distance"), py::arg("k"), py::arg("delta") = kDefaultDelta);
  m.def("estimate", [](const py::object& mean_lee, int k, std::int64_t M, const std::string& mode) {
    return estimate_dict(estimate_distance(rational(mean_lee), k, M, parse_mode(mode)));
  }, py::arg("mean_lee"), py::arg("k"), py::arg("M"), py::arg("mode") = "raw");

  py::class_<HashKey>(m, "HashKey")
      .def_static("generate", [](int k, std::size_t M, std::size_t N, const std::string& seed, double delta) {
        return generate_key(k, M, N, seed_from_string(seed), delta);
      }, py::arg("k"), py::arg("M"), py::arg("N"), py::arg("seed"), py::arg("delta") = kDefaultDelta)
      .def_static("from_json", &key_from_json)
      .def("to_json", &key_to_json)
      .def_property_readonly("k", &HashKey::k)
      .def_property_readonly("delta", &HashKey::delta)
      .def_property_readonly("M", &HashKey::rows)
      .def_property_readonly("N", &HashKey::cols)
      .def_property_readonly("matrix", [](const HashKey& key) {
        py::array_t<double> a({key.rows(), key.cols()});
        std::copy(key.matrix().begin(), key.matrix().end(), a.mutable_data());
        return a;
      })
      .def_property_readonly("dither", [](const HashKey& key) {
        return std::vector<double>(key.dither().begin(), key.dither().end());
      })
      .def(py::self == py::self);

  m.def("hash", [](const HashKey& key, const std::vector<double>& x) {
    return std::move(hash(key, x)).components();
  }, py::arg("key"), py::arg("x"));
  m.def("lee_distance", &lee_distance, py::arg("a"), py::arg("b"), py::arg("k"));
  m.def("mean_lee_distance", [](const std::vector<std::uint32_t>& h1, const std::vector<std::uint32_t>& h2, int k) {
    return fraction(mean_lee_distance(vector_of(h1, k), vector_of(h2, k)));
  }, py::arg("h1"), py::arg("h2"), py::arg("k"));
  m.def("ring_code", [](const std::vector<std::uint32_t>& h, int k) {
    const BinaryCode code = encode_lee_to_binary(vector_of(h, k));
    std::vector<int> bits(code.bit_count());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = code.bit(i);
    return bits;
  }, py::arg("h"), py::arg("k"));
  m.def("ring_hamming_distance", [](const std::vector<std::uint32_t>& h1, const std::vector<std::uint32_t>& h2, int k) {
    return hamming_distance(encode_lee_to_binary(vector_of(h1, k)), encode_lee_to_binary(vector_of(h2, k)));
  }, py::arg("h1"), py::arg("h2"), py::arg("k"));

  m.def("hash_submission_frame", [](const std::vector<std::uint32_t>& h, int k) {
    const ProtocolMessage message{SessionId{}, ProtocolKind::FullKey3P, Role::Alice, HashSubmission{vector_of(h, k)}};
    const Frame frame = encode_message(message);
    return py::bytes(reinterpret_cast<const char*>(frame.data()), frame.size());
  }, py::arg("h"), py::arg("k"));
  m.def("decode_frame", [](const py::bytes& data) {
    const std::string raw = data;
    const ProtocolMessage message =
        decode_message(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
    py::dict d;
    d["kind"] = std::string(to_string(message.kind));
    d["sender"] = std::string(to_string(message.sender));
    d["session"] = py::bytes(reinterpret_cast<const char*>(message.session.data()), message.session.size());
    if (const auto* h = std::get_if<HashSubmission>(&message.body)) {
      d["hash"] = std::vector<std::uint32_t>(h->hash.components().begin(), h->hash.components().end());
      d["k"] = h->hash.k();
    }
    return d;
  }, py::arg("frame"));

  m.def("run_protocol", [](const std::string& kind_name, const std::vector<double>& x1, const std::vector<double>& x2,
                           int k, std::int64_t M, std::int64_t padding, const std::string& seed,
                           const std::string& transport, const std::string& mode) {
    SessionConfig config;
    config.k = k;
    config.M = M;
    config.padding = padding;
    config.mode = parse_mode(mode);
    const ProtocolKind kind = kind_of(kind_name);
    RunResult run;
    {
      py::gil_scoped_release release;
      if (transport == "local") {
        run = drive_local(kind, x1, x2, config, seed_from_string(seed));
      } else if (transport == "tcp") {
        run = drive_tcp(kind, x1, x2, config, seed_from_string(seed));
      } else {
        throw InvalidParameter("transport must be 'local' or 'tcp'");
      }
    }
    py::dict d;
    d["alice"] = estimate_dict(run.alice);
    d["bob"] = estimate_dict(run.bob);
    d["reported_mean"] = run.reported_mean ? fraction(*run.reported_mean) : py::none();
    d["messages"] = run.transcript.size();
    return d;
  }, py::arg("kind"), py::arg("x1"), py::arg("x2"), py::arg("k"), py::arg("M"), py::arg("padding") = 0,
        py::arg("seed") = "0", py::arg("transport") = "local", py::arg("mode") = "raw");

  m.def("sweep", [](const std::vector<int>& ks, std::size_t M, std::size_t N, int trials,
                    const std::vector<double>& distances, const std::string& seed) {
    SweepSpec spec;
    spec.ks = ks;
    spec.M = M;
    spec.N = N;
    spec.trials = trials;
    spec.distances = distances;
    spec.seed = seed_from_string(seed);
    std::vector<SweepRow> rows;
    {
      py::gil_scoped_release release;
      rows = run_sweep(spec);
    }
    py::list out;
    for (const auto& r : rows) {
      py::dict d;
      d["k"] = r.k;
      d["distance"] = r.distance;
      d["mean_lee"] = r.mean_lee;
      d["std_lee"] = r.std_lee;
      d["expected_lee"] = r.expected_lee;
      d["abs_deviation"] = r.abs_deviation;
      out.append(d);
    }
    return out;
  }, py::arg("ks"), py::arg("M"), py::arg("N"), py::arg("trials"), py::arg("distances") = std::vector<double>{},
        py::arg("seed") = "0");

  m.def("uniformity", [](int k, std::size_t M, const std::vector<double>& x, std::size_t samples,
                         const std::string& seed, bool broken_dither) {
    return report_dict(uniformity_report(k, M, x.size(), x, samples, seed_from_string(seed),
                                         broken_dither ? DitherMode::Zero : DitherMode::Uniform));
  }, py::arg("k"), py::arg("M"), py::arg("x"), py::arg("samples"), py::arg("seed") = "0",
        py::arg("broken_dither") = false);
}
