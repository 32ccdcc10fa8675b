#include "imexsim/circuit_model.hpp"

#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <numeric>
#include <sstream>

namespace imexsim {

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    /// Returns false when a and b were already joined.
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) {
            return false;
        }
        parent_[b] = a;
        return true;
    }

private:
    std::vector<std::size_t> parent_;
};

bool is_voltage_type(ElementKind kind) {
    return kind == ElementKind::VoltageSource || kind == ElementKind::Capacitor;
}

bool is_current_type(ElementKind kind) {
    return kind == ElementKind::CurrentSource || kind == ElementKind::Inductor;
}

bool is_state(ElementKind kind) {
    return kind == ElementKind::Capacitor || kind == ElementKind::Inductor;
}

bool is_input(ElementKind kind) {
    return kind == ElementKind::VoltageSource || kind == ElementKind::CurrentSource;
}

/// Branch of the graph used by the topology checks (elements and ports alike).
struct GraphEdge {
    std::string id;
    std::string pos;
    std::string neg;
    bool voltage_type = false;
    bool current_type = false;
};

std::vector<GraphEdge> graph_edges(const Netlist& netlist) {
    std::vector<GraphEdge> edges;
    for (const auto& e : netlist.elements()) {
        edges.push_back({e.id, e.pos, e.neg, is_voltage_type(e.kind), is_current_type(e.kind)});
    }
    for (const auto& p : netlist.ports()) {
        const bool voltage = p.kind == PortKind::VoltageSource;
        edges.push_back({p.id, p.pos, p.neg, voltage, !voltage});
    }
    return edges;
}

/// Element ids on the path between two nodes in a forest of voltage-type edges.
std::vector<std::string> forest_path(const std::vector<GraphEdge>& edges,
                                     const std::vector<std::size_t>& forest,
                                     const std::string& from, const std::string& to) {
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> adjacency;
    for (auto idx : forest) {
        adjacency[edges[idx].pos].emplace_back(edges[idx].neg, idx);
        adjacency[edges[idx].neg].emplace_back(edges[idx].pos, idx);
    }
    std::map<std::string, std::pair<std::string, std::size_t>> came_from;
    std::deque<std::string> queue{from};
    came_from[from] = {from, edges.size()};
    while (!queue.empty()) {
        auto node = queue.front();
        queue.pop_front();
        if (node == to) {
            break;
        }
        for (const auto& [next, idx] : adjacency[node]) {
            if (!came_from.count(next)) {
                came_from[next] = {node, idx};
                queue.push_back(next);
            }
        }
    }
    std::vector<std::string> path;
    if (!came_from.count(to)) {
        return path;
    }
    for (auto node = to; node != from;) {
        const auto& [prev, idx] = came_from[node];
        path.push_back(edges[idx].id);
        node = prev;
    }
    return path;
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) {
            out += ", ";
        }
        out += id;
    }
    return out;
}

/// Requested probe output such as "V(C_p1)", "I(L_f1)" or "V(bus)".
struct ProbeSpec {
    bool current = false;
    std::string target;
};

ProbeSpec parse_probe(const std::string& text) {
    if (text.size() < 4 || text[1] != '(' || text.back() != ')') {
        throw ConfigError("probe output '" + text + "' must look like V(name) or I(name)");
    }
    const char head = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    if (head != 'V' && head != 'I') {
        throw ConfigError("probe output '" + text + "' must start with V or I");
    }
    return {head == 'I', text.substr(2, text.size() - 3)};
}

}  // namespace

std::string_view to_string(ElementKind kind) {
    switch (kind) {
    case ElementKind::Resistor: return "resistor";
    case ElementKind::Inductor: return "inductor";
    case ElementKind::Capacitor: return "capacitor";
    case ElementKind::VoltageSource: return "vsource";
    case ElementKind::CurrentSource: return "isource";
    case ElementKind::Switch: return "switch";
    case ElementKind::Diode: return "diode";
    }
    return "unknown";
}

ElementKind element_kind_from_string(std::string_view text) {
    static const std::map<std::string, ElementKind, std::less<>> kinds = {
        {"resistor", ElementKind::Resistor},     {"r", ElementKind::Resistor},
        {"inductor", ElementKind::Inductor},     {"l", ElementKind::Inductor},
        {"capacitor", ElementKind::Capacitor},   {"c", ElementKind::Capacitor},
        {"vsource", ElementKind::VoltageSource}, {"v", ElementKind::VoltageSource},
        {"voltage-source", ElementKind::VoltageSource},
        {"isource", ElementKind::CurrentSource}, {"i", ElementKind::CurrentSource},
        {"current-source", ElementKind::CurrentSource},
        {"switch", ElementKind::Switch},         {"s", ElementKind::Switch},
        {"diode", ElementKind::Diode},           {"d", ElementKind::Diode},
    };
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto it = kinds.find(lower);
    if (it == kinds.end()) {
        throw ConfigError("unknown element kind '" + std::string(text) + "'");
    }
    return it->second;
}

// -----------------------------------------------------------------------------
// Netlist
// -----------------------------------------------------------------------------

std::string Netlist::canonical_node(std::string_view name) {
    if (name == "gnd" || name == "GND" || name == "0") {
        return std::string(ground);
    }
    return std::string(name);
}

void Netlist::check_new_id(const std::string& id) const {
    if (id.empty()) {
        throw ConfigError("element id must not be empty");
    }
    if (find_element(id) || find_port(id)) {
        throw ConfigError("duplicate element id '" + id + "'");
    }
}

Element& Netlist::add(Element element) {
    check_new_id(element.id);
    element.pos = canonical_node(element.pos);
    element.neg = canonical_node(element.neg);
    const bool passive = element.kind == ElementKind::Resistor ||
                         element.kind == ElementKind::Inductor ||
                         element.kind == ElementKind::Capacitor;
    if (passive && !(element.value > 0.0)) {
        throw ConfigError("element '" + element.id + "' needs a positive value");
    }
    elements_.push_back(std::move(element));
    return elements_.back();
}

Element& Netlist::add_resistor(std::string id, std::string pos, std::string neg, Real ohms) {
    return add({std::move(id), ElementKind::Resistor, std::move(pos), std::move(neg), ohms});
}

Element& Netlist::add_inductor(std::string id, std::string pos, std::string neg, Real henries) {
    return add({std::move(id), ElementKind::Inductor, std::move(pos), std::move(neg), henries});
}

Element& Netlist::add_capacitor(std::string id, std::string pos, std::string neg, Real farads) {
    return add({std::move(id), ElementKind::Capacitor, std::move(pos), std::move(neg), farads});
}

Element& Netlist::add_voltage_source(std::string id, std::string pos, std::string neg, Real volts) {
    return add({std::move(id), ElementKind::VoltageSource, std::move(pos), std::move(neg), volts});
}

Element& Netlist::add_current_source(std::string id, std::string pos, std::string neg, Real amps) {
    return add({std::move(id), ElementKind::CurrentSource, std::move(pos), std::move(neg), amps});
}

Element& Netlist::add_switch(std::string id, std::string pos, std::string neg) {
    return add({std::move(id), ElementKind::Switch, std::move(pos), std::move(neg), 0.0});
}

Element& Netlist::add_diode(std::string id, std::string anode, std::string cathode) {
    return add({std::move(id), ElementKind::Diode, std::move(anode), std::move(cathode), 0.0});
}

NlPort& Netlist::add_port(NlPort port) {
    check_new_id(port.id);
    port.pos = canonical_node(port.pos);
    port.neg = canonical_node(port.neg);
    ports_.push_back(std::move(port));
    return ports_.back();
}

std::optional<std::size_t> Netlist::find_element(std::string_view id) const {
    for (std::size_t i = 0; i < elements_.size(); ++i) {
        if (elements_[i].id == id) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> Netlist::find_port(std::string_view id) const {
    for (std::size_t i = 0; i < ports_.size(); ++i) {
        if (ports_[i].id == id) {
            return i;
        }
    }
    return std::nullopt;
}

const Element& Netlist::element(std::string_view id) const {
    auto idx = find_element(id);
    if (!idx) {
        throw ConfigError("no element named '" + std::string(id) + "'");
    }
    return elements_[*idx];
}

std::vector<std::string> Netlist::nodes() const {
    std::vector<std::string> out;
    auto add_node = [&](const std::string& n) {
        if (n != ground && std::find(out.begin(), out.end(), n) == out.end()) {
            out.push_back(n);
        }
    };
    for (const auto& e : elements_) {
        add_node(e.pos);
        add_node(e.neg);
    }
    for (const auto& p : ports_) {
        add_node(p.pos);
        add_node(p.neg);
    }
    return out;
}

namespace {
template <class Pred>
std::vector<std::size_t> indices_where(const std::vector<Element>& elements, Pred pred) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (pred(elements[i].kind)) {
            out.push_back(i);
        }
    }
    return out;
}
}  // namespace

std::vector<std::size_t> Netlist::state_elements() const { return indices_where(elements_, is_state); }

std::vector<std::size_t> Netlist::input_elements() const { return indices_where(elements_, is_input); }

std::vector<std::size_t> Netlist::switch_elements() const {
    return indices_where(elements_, [](ElementKind k) { return k == ElementKind::Switch; });
}

std::vector<std::size_t> Netlist::diode_elements() const {
    return indices_where(elements_, [](ElementKind k) { return k == ElementKind::Diode; });
}

void Netlist::validate() const {
    if (elements_.empty()) {
        throw TopologyError("netlist has no elements", {});
    }
    const auto edges = graph_edges(*this);

    std::vector<std::string> all_nodes{std::string(ground)};
    for (auto& n : nodes()) {
        all_nodes.push_back(n);
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < all_nodes.size(); ++i) {
        index[all_nodes[i]] = i;
    }

    bool has_ground = false;
    for (const auto& e : edges) {
        if (e.pos == e.neg) {
            throw TopologyError("element '" + e.id + "' connects node '" + e.pos + "' to itself",
                                {e.id});
        }
        has_ground = has_ground || e.pos == ground || e.neg == ground;
    }
    if (!has_ground) {
        throw TopologyError("netlist has no ground node '0'", {});
    }

    DisjointSets connected(all_nodes.size());
    for (const auto& e : edges) {
        connected.unite(index[e.pos], index[e.neg]);
    }
    std::vector<std::string> floating;
    for (std::size_t i = 1; i < all_nodes.size(); ++i) {
        if (connected.find(i) != connected.find(0)) {
            floating.push_back(all_nodes[i]);
        }
    }
    if (!floating.empty()) {
        throw TopologyError("nodes not connected to ground: " + join_ids(floating), floating);
    }

    DisjointSets voltage(all_nodes.size());
    std::vector<std::size_t> forest;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (!edges[i].voltage_type) {
            continue;
        }
        if (!voltage.unite(index[edges[i].pos], index[edges[i].neg])) {
            auto loop = forest_path(edges, forest, edges[i].pos, edges[i].neg);
            loop.push_back(edges[i].id);
            throw TopologyError("loop of voltage sources/capacitors/voltage ports: " + join_ids(loop),
                                loop);
        }
        forest.push_back(i);
    }

    DisjointSets non_current(all_nodes.size());
    for (const auto& e : edges) {
        if (!e.current_type) {
            non_current.unite(index[e.pos], index[e.neg]);
        }
    }
    std::vector<std::string> isolated;
    for (std::size_t i = 1; i < all_nodes.size(); ++i) {
        if (non_current.find(i) != non_current.find(0)) {
            isolated.push_back(all_nodes[i]);
        }
    }
    if (!isolated.empty()) {
        throw TopologyError("cut-set of current sources/inductors/current ports isolates nodes: " +
                                join_ids(isolated),
                            isolated);
    }
}

void SwitchParams::validate() const {
    if (!(r_on > 0.0) || !(r_off > r_on)) {
        throw ConfigError("switch resistances need 0 < r_on < r_off");
    }
}

std::uint64_t SwitchSignals::key() const {
    if (gates.size() + diodes.size() > 64) {
        throw ConfigError("more than 64 switching devices are not supported");
    }
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < gates.size(); ++i) {
        if (gates[i]) {
            k |= std::uint64_t{1} << i;
        }
    }
    for (std::size_t j = 0; j < diodes.size(); ++j) {
        if (diodes[j]) {
            k |= std::uint64_t{1} << (gates.size() + j);
        }
    }
    return k;
}

// -----------------------------------------------------------------------------
// Modified nodal analysis
// -----------------------------------------------------------------------------

StateSpaceEntry build_state_space(const Netlist& netlist, const SwitchParams& params,
                                  const SwitchSignals& signals,
                                  const std::vector<std::string>& probe_outputs) {
    params.validate();
    netlist.validate();

    const auto& elements = netlist.elements();
    const auto& ports = netlist.ports();
    const auto switches = netlist.switch_elements();
    const auto diodes = netlist.diode_elements();
    if (signals.gates.size() != switches.size() || signals.diodes.size() != diodes.size()) {
        throw DimensionError("switch signals do not match the netlist's switch/diode counts");
    }

    const auto node_names = netlist.nodes();
    std::map<std::string, Index, std::less<>> node_index;
    for (std::size_t i = 0; i < node_names.size(); ++i) {
        node_index[node_names[i]] = static_cast<Index>(i);
    }
    auto node_of = [&](const std::string& name) -> Index {
        return name == Netlist::ground ? -1 : node_index.at(name);
    };
    const Index num_nodes = static_cast<Index>(node_names.size());

    // Column layout of the right-hand side: [states | inputs | ports].
    const auto state_elems = netlist.state_elements();
    const auto input_elems = netlist.input_elements();
    const Index n = static_cast<Index>(state_elems.size());
    const Index mu = static_cast<Index>(input_elems.size());
    const Index mnl = static_cast<Index>(ports.size());
    const Index cols = n + mu + mnl;

    std::vector<Index> state_col(elements.size(), -1);
    std::vector<Index> input_col(elements.size(), -1);
    for (Index j = 0; j < n; ++j) {
        state_col[state_elems[static_cast<std::size_t>(j)]] = j;
    }
    for (Index j = 0; j < mu; ++j) {
        input_col[input_elems[static_cast<std::size_t>(j)]] = n + j;
    }

    // Extra unknowns: branch currents of voltage-type elements and ports.
    std::vector<Index> elem_branch(elements.size(), -1);
    std::vector<Index> port_branch(ports.size(), -1);
    Index num_branches = 0;
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (is_voltage_type(elements[i].kind)) {
            elem_branch[i] = num_branches++;
        }
    }
    for (std::size_t p = 0; p < ports.size(); ++p) {
        if (ports[p].kind == PortKind::VoltageSource) {
            port_branch[p] = num_branches++;
        }
    }

    std::vector<Real> conductance(elements.size(), 0.0);
    for (std::size_t s = 0; s < switches.size(); ++s) {
        conductance[switches[s]] = 1.0 / (signals.gates[s] ? params.r_on : params.r_off);
    }
    for (std::size_t d = 0; d < diodes.size(); ++d) {
        conductance[diodes[d]] = 1.0 / (signals.diodes[d] ? params.r_on : params.r_off);
    }
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (elements[i].kind == ElementKind::Resistor) {
            conductance[i] = 1.0 / elements[i].value;
        }
    }

    const Index size = num_nodes + num_branches;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(size, size);
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(size, cols);

    auto stamp_conductance = [&](Index a, Index b, Real g) {
        if (a >= 0) G(a, a) += g;
        if (b >= 0) G(b, b) += g;
        if (a >= 0 && b >= 0) {
            G(a, b) -= g;
            G(b, a) -= g;
        }
    };
    auto stamp_branch = [&](Index a, Index b, Index branch) {
        const Index row = num_nodes + branch;
        if (a >= 0) {
            G(a, row) += 1.0;
            G(row, a) += 1.0;
        }
        if (b >= 0) {
            G(b, row) -= 1.0;
            G(row, b) -= 1.0;
        }
    };
    // Current `col` flows from a to b through the element: it leaves node a.
    auto stamp_current_column = [&](Index a, Index b, Index col) {
        if (a >= 0) E(a, col) -= 1.0;
        if (b >= 0) E(b, col) += 1.0;
    };

    for (std::size_t i = 0; i < elements.size(); ++i) {
        const auto& e = elements[i];
        const Index a = node_of(e.pos);
        const Index b = node_of(e.neg);
        switch (e.kind) {
        case ElementKind::Resistor:
        case ElementKind::Switch:
        case ElementKind::Diode:
            stamp_conductance(a, b, conductance[i]);
            break;
        case ElementKind::Capacitor:
            stamp_branch(a, b, elem_branch[i]);
            E(num_nodes + elem_branch[i], state_col[i]) = 1.0;
            break;
        case ElementKind::VoltageSource:
            stamp_branch(a, b, elem_branch[i]);
            E(num_nodes + elem_branch[i], input_col[i]) = 1.0;
            break;
        case ElementKind::Inductor:
            stamp_current_column(a, b, state_col[i]);
            break;
        case ElementKind::CurrentSource:
            stamp_current_column(a, b, input_col[i]);
            break;
        }
    }
    for (std::size_t p = 0; p < ports.size(); ++p) {
        const Index a = node_of(ports[p].pos);
        const Index b = node_of(ports[p].neg);
        const Index col = n + mu + static_cast<Index>(p);
        if (ports[p].kind == PortKind::CurrentSource) {
            stamp_current_column(a, b, col);
        } else {
            stamp_branch(a, b, port_branch[p]);
            E(num_nodes + port_branch[p], col) = 1.0;
        }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
    if (lu.rank() < size) {
        throw SingularMatrixError("MNA matrix is singular for switching state " +
                                      std::to_string(signals.key()),
                                  signals.key());
    }
    const Eigen::MatrixXd Z = lu.solve(E);

    using RowVec = Eigen::RowVectorXd;
    auto node_row = [&](Index node) -> RowVec {
        return node >= 0 ? RowVec(Z.row(node)) : RowVec::Zero(cols);
    };
    auto unit_row = [&](Index col) {
        RowVec r = RowVec::Zero(cols);
        r(col) = 1.0;
        return r;
    };
    auto element_voltage = [&](std::size_t i) -> RowVec {
        return node_row(node_of(elements[i].pos)) - node_row(node_of(elements[i].neg));
    };
    auto element_current = [&](std::size_t i) -> RowVec {
        const auto& e = elements[i];
        switch (e.kind) {
        case ElementKind::Resistor:
        case ElementKind::Switch:
        case ElementKind::Diode:
            return conductance[i] * element_voltage(i);
        case ElementKind::Capacitor:
        case ElementKind::VoltageSource:
            return Z.row(num_nodes + elem_branch[i]);
        case ElementKind::Inductor:
            return unit_row(state_col[i]);
        case ElementKind::CurrentSource:
            return unit_row(input_col[i]);
        }
        return RowVec::Zero(cols);
    };
    auto port_voltage = [&](std::size_t p) -> RowVec {
        return node_row(node_of(ports[p].pos)) - node_row(node_of(ports[p].neg));
    };
    auto port_current = [&](std::size_t p) -> RowVec {
        if (ports[p].kind == PortKind::CurrentSource) {
            return unit_row(n + mu + static_cast<Index>(p));
        }
        return Z.row(num_nodes + port_branch[p]);
    };

    Eigen::MatrixXd deriv(n, cols);
    for (Index j = 0; j < n; ++j) {
        const auto i = state_elems[static_cast<std::size_t>(j)];
        const auto& e = elements[i];
        if (e.kind == ElementKind::Capacitor) {
            deriv.row(j) = Z.row(num_nodes + elem_branch[i]) / e.value;
        } else {
            deriv.row(j) = element_voltage(i) / e.value;
        }
    }

    const Index p_out = mnl + 2 * static_cast<Index>(diodes.size()) +
                        static_cast<Index>(probe_outputs.size());
    Eigen::MatrixXd out(p_out, cols);
    Index row = 0;
    for (std::size_t p = 0; p < ports.size(); ++p) {
        out.row(row++) = ports[p].kind == PortKind::CurrentSource ? port_voltage(p) : port_current(p);
    }
    for (auto d : diodes) {
        out.row(row++) = element_current(d);
        out.row(row++) = element_voltage(d);
    }
    for (const auto& probe : probe_outputs) {
        const auto spec = parse_probe(probe);
        if (auto ei = netlist.find_element(spec.target)) {
            out.row(row++) = spec.current ? element_current(*ei) : element_voltage(*ei);
        } else if (auto pi = netlist.find_port(spec.target)) {
            out.row(row++) = spec.current ? port_current(*pi) : port_voltage(*pi);
        } else if (!spec.current &&
                   (Netlist::canonical_node(spec.target) == Netlist::ground ||
                    node_index.count(spec.target))) {
            out.row(row++) = node_row(node_of(Netlist::canonical_node(spec.target)));
        } else {
            throw ConfigError("probe output '" + probe + "' does not name an element, port or node");
        }
    }

    StateSpaceEntry entry;
    entry.key = signals.key();
    entry.A = deriv.leftCols(n);
    entry.B1 = deriv.middleCols(n, mu);
    entry.B2 = deriv.rightCols(mnl);
    entry.C = out.leftCols(n);
    entry.D1 = out.middleCols(n, mu);
    entry.D2 = out.rightCols(mnl);

    if (!entry.A.allFinite() || !entry.B1.allFinite() || !entry.B2.allFinite() ||
        !entry.C.allFinite() || !entry.D1.allFinite() || !entry.D2.allFinite()) {
        throw SingularMatrixError("non-finite state-space matrices for switching state " +
                                      std::to_string(entry.key),
                                  entry.key);
    }
    return entry;
}

// -----------------------------------------------------------------------------
// StateSpaceBank
// -----------------------------------------------------------------------------

StateSpaceBank::StateSpaceBank(std::shared_ptr<const Netlist> netlist, SwitchParams params,
                               std::vector<std::string> probe_outputs)
    : netlist_(std::move(netlist)), params_(params), probe_outputs_(std::move(probe_outputs)) {
    if (!netlist_) {
        throw ConfigError("state-space bank needs a netlist");
    }
    params_.validate();
    netlist_->validate();
    num_switches_ = netlist_->switch_elements().size();
    num_diodes_ = netlist_->diode_elements().size();
    if (num_switches_ + num_diodes_ > 64) {
        throw ConfigError("more than 64 switching devices are not supported");
    }

    const auto& elements = netlist_->elements();
    for (auto i : netlist_->state_elements()) {
        const auto& e = elements[i];
        state_labels_.push_back((e.kind == ElementKind::Capacitor ? "v(" : "i(") + e.id + ")");
    }
    for (auto i : netlist_->input_elements()) {
        input_labels_.push_back(elements[i].id);
    }
    for (const auto& p : netlist_->ports()) {
        port_labels_.push_back(p.id);
        output_labels_.push_back((p.kind == PortKind::CurrentSource ? "v(" : "i(") + p.id + ")");
    }
    for (auto d : netlist_->diode_elements()) {
        output_labels_.push_back("i(" + elements[d].id + ")");
        output_labels_.push_back("v(" + elements[d].id + ")");
    }
    for (const auto& probe : probe_outputs_) {
        parse_probe(probe);
        output_labels_.push_back(probe);
    }
}

std::optional<Index> StateSpaceBank::find_output(std::string_view label) const {
    for (std::size_t i = 0; i < output_labels_.size(); ++i) {
        if (output_labels_[i] == label) {
            return static_cast<Index>(i);
        }
    }
    return std::nullopt;
}

std::optional<Index> StateSpaceBank::find_state(std::string_view label) const {
    for (std::size_t i = 0; i < state_labels_.size(); ++i) {
        if (state_labels_[i] == label) {
            return static_cast<Index>(i);
        }
    }
    return std::nullopt;
}

std::shared_ptr<const StateSpaceEntry> StateSpaceBank::get(const SwitchSignals& signals) const {
    const auto key = signals.key();
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            return it->second;
        }
    }
    auto built = std::make_shared<const StateSpaceEntry>(
        build_state_space(*netlist_, params_, signals, probe_outputs_));
    std::lock_guard lock(mutex_);
    auto [it, inserted] = cache_.try_emplace(key, std::move(built));
    return it->second;
}

std::size_t StateSpaceBank::cached_entries() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

void StateSpaceBank::export_csv(const StateSpaceEntry& entry, const std::filesystem::path& path) const {
    std::ostringstream out;
    out << "# switching_state_key=" << entry.key << "\n";
    std::vector<std::string> header{"row"};
    header.insert(header.end(), state_labels_.begin(), state_labels_.end());
    header.insert(header.end(), input_labels_.begin(), input_labels_.end());
    for (const auto& p : port_labels_) {
        header.push_back("y_nl(" + p + ")");
    }
    out << csv::join(header) << "\n";
    auto emit = [&](const std::string& label, const auto& a, const auto& b, const auto& c, Index r) {
        out << label;
        for (Index j = 0; j < a.cols(); ++j) out << "," << csv::format_real(a(r, j));
        for (Index j = 0; j < b.cols(); ++j) out << "," << csv::format_real(b(r, j));
        for (Index j = 0; j < c.cols(); ++j) out << "," << csv::format_real(c(r, j));
        out << "\n";
    };
    for (Index r = 0; r < entry.A.rows(); ++r) {
        emit("d/dt " + state_labels_[static_cast<std::size_t>(r)], entry.A, entry.B1, entry.B2, r);
    }
    for (Index r = 0; r < entry.C.rows(); ++r) {
        emit(output_labels_[static_cast<std::size_t>(r)], entry.C, entry.D1, entry.D2, r);
    }
    csv::write_atomic(path, out.str());
}

// -----------------------------------------------------------------------------
// Switching-state logic and evaluation
// -----------------------------------------------------------------------------

SwitchSignals determine_switching_state(const std::vector<bool>& gates, std::span<const Real> outputs,
                                        const std::vector<bool>& diodes, const StateSpaceBank& bank,
                                        const DiodeThresholds& thresholds) {
    if (gates.size() != bank.num_switches() || diodes.size() != bank.num_diodes()) {
        throw DimensionError("gate/diode vectors do not match the netlist");
    }
    if (static_cast<Index>(outputs.size()) != bank.num_outputs()) {
        throw DimensionError("output vector does not match the bank's output layout");
    }
    SwitchSignals next;
    next.gates.assign(gates.begin(), gates.end());
    next.diodes.assign(diodes.begin(), diodes.end());
    for (std::size_t d = 0; d < diodes.size(); ++d) {
        const Real current = outputs[static_cast<std::size_t>(bank.diode_current_row(d))];
        const Real voltage = outputs[static_cast<std::size_t>(bank.diode_voltage_row(d))];
        if (!diodes[d] && voltage > thresholds.v_on) {
            next.diodes[d] = true;
        } else if (diodes[d] && current < -thresholds.i_off) {
            next.diodes[d] = false;
        }
    }
    return next;
}

namespace {
void check_eval_dims(const Matrix& left, const Matrix& b1, const Matrix& b2, const Vector& x,
                     const Vector& u, const Vector& y_nl) {
    if (left.cols() != x.size() || b1.cols() != u.size() || b2.cols() != y_nl.size()) {
        throw DimensionError("state/input/port vector sizes do not match the state-space entry");
    }
}
}  // namespace

Vector eval_output(const StateSpaceEntry& entry, const Vector& x, const Vector& u, const Vector& y_nl) {
    check_eval_dims(entry.C, entry.D1, entry.D2, x, u, y_nl);
    return entry.C * x + entry.D1 * u + entry.D2 * y_nl;
}

Vector eval_derivative(const StateSpaceEntry& entry, const Vector& x, const Vector& u,
                       const Vector& y_nl) {
    check_eval_dims(entry.A, entry.B1, entry.B2, x, u, y_nl);
    return entry.A * x + entry.B1 * u + entry.B2 * y_nl;
}

}  // namespace imexsim
