#include "zipe/netdata.hpp"

namespace zipe {

// WSCC 9-bus network on a 100 MVA base. Bus 1 is the reference machine; the
// converters at buses 2 and 3 are dispatched below the classic values so that
// line 4-5 carries the largest flow.
std::string_view case9_json()
{
    static constexpr std::string_view text = R"({
  "base_mva": 100.0,
  "f_nom": 60.0,
  "buses": [
    {"id": 1, "kind": "Reference", "v_set": 1.04, "v_nom": 16.5},
    {"id": 2, "kind": "PV", "v_set": 1.025, "v_nom": 18.0},
    {"id": 3, "kind": "PV", "v_set": 1.025, "v_nom": 13.8},
    {"id": 4, "kind": "PQ", "v_nom": 230.0},
    {"id": 5, "kind": "PQ", "v_nom": 230.0},
    {"id": 6, "kind": "PQ", "v_nom": 230.0},
    {"id": 7, "kind": "PQ", "v_nom": 230.0},
    {"id": 8, "kind": "PQ", "v_nom": 230.0},
    {"id": 9, "kind": "PQ", "v_nom": 230.0}
  ],
  "branches": [
    {"id": "1-4", "from_bus": 1, "to_bus": 4, "r": 0.0, "x": 0.0576, "b": 0.0, "transformer": true},
    {"id": "4-5", "from_bus": 4, "to_bus": 5, "r": 0.01, "x": 0.085, "b": 0.176},
    {"id": "4-6", "from_bus": 4, "to_bus": 6, "r": 0.017, "x": 0.092, "b": 0.158},
    {"id": "5-7", "from_bus": 5, "to_bus": 7, "r": 0.032, "x": 0.161, "b": 0.306},
    {"id": "6-9", "from_bus": 6, "to_bus": 9, "r": 0.039, "x": 0.17, "b": 0.358},
    {"id": "7-8", "from_bus": 7, "to_bus": 8, "r": 0.0085, "x": 0.072, "b": 0.149},
    {"id": "8-9", "from_bus": 8, "to_bus": 9, "r": 0.0119, "x": 0.1008, "b": 0.209},
    {"id": "2-7", "from_bus": 2, "to_bus": 7, "r": 0.0, "x": 0.0625, "b": 0.0, "transformer": true},
    {"id": "3-9", "from_bus": 3, "to_bus": 9, "r": 0.0, "x": 0.0586, "b": 0.0, "transformer": true}
  ],
  "generators": [
    {"bus": 1, "kind": "SM", "p_set": 1.8, "q_set": 0.0, "params": {}},
    {"bus": 2, "kind": "GFM_VSM", "p_set": 0.8, "q_set": 0.0, "params": {}},
    {"bus": 3, "kind": "GFL", "p_set": 0.6, "q_set": 0.0, "params": {}}
  ],
  "loads": [
    {"bus": 5, "p0": 1.25, "q0": 0.5, "v0": 1.0, "eta": [1, 0, 0, 0], "gamma": [1, 0, 0, 0], "eload_params": {}},
    {"bus": 6, "p0": 0.9, "q0": 0.3, "v0": 1.0, "eta": [1, 0, 0, 0], "gamma": [1, 0, 0, 0], "eload_params": {}},
    {"bus": 8, "p0": 1.0, "q0": 0.35, "v0": 1.0, "eta": [1, 0, 0, 0], "gamma": [1, 0, 0, 0], "eload_params": {}}
  ]
})";
    return text;
}

}  // namespace zipe
