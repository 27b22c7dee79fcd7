"""Unit test for modules/snn_infer/snn_infer.py"""
from modules.snn_infer.snn_infer import (
    InferenceResult,
    Module,
    build_snn,
    convolve_rates_experiment,
    default_checkpoints,
    energy_estimate,
    evaluate_snn,
    infer,
    rate_correlation,
    simulate_batch,
)
from modules.annet.annet import (
    DENSE,
    LayerSpec,
    WeightStore,
    forward,
    parse_architecture,
)
from modules.activations.activations import ActivationKind, CombinedScale
from modules.dataio.dataio import Dataset
from modules.lif_core.lif_core import LifParams
from nslif_files.common.exceptions import InvalidParameterError, UnsupportedLayerError
import numpy as np
import pytest

PARAMS = LifParams(i_offset=0.0)


def do_nothing(*args):
    """Used to override the print function because using the self.print causes broken pipes"""
    pass


def create_snn_infer_instance(outputQueue):
    """Create an instance of snn_infer.py
    needed by every other test in this file"""
    snn_infer = Module(outputQueue)
    # override the self.print function to avoid broken pipes
    snn_infer.print = do_nothing
    return snn_infer


def bar_network(weight=0.05):
    """10fc network whose unit c listens to the bar of class c"""
    w = np.zeros((10, 28 * 28))
    for c in range(10):
        mask = np.zeros((28, 28))
        mask[2 * c + 4:2 * c + 7, 4:24] = weight
        w[c] = mask.ravel()
    return build_snn(WeightStore([LayerSpec(DENSE, 10)], [w]), PARAMS)


def test_build_snn_geometry():
    weights = WeightStore.initialize(parse_architecture('6c5-2s-12c5-2s-10fc'), seed=1)
    net = build_snn(weights, PARAMS)
    assert net.sizes == [784, 3456, 864, 768, 192, 10]
    assert np.all(net.fan_in(1) == 25)
    assert np.all(net.fan_in(2) == 4)
    assert np.all(net.fan_in(3) == 150)
    assert np.all(net.fan_in(5) == 192)
    fan_out = net.fan_out(0).reshape(28, 28)
    # a corner pixel is seen by one window of every map, a central one by 25
    assert fan_out[0, 0] == 6
    assert fan_out[14, 14] == 150
    assert np.all(net.fan_out(5) == 0)
    assert net.connection_count == sum(int(f.sum()) for f in net.fan_outs())


def test_connection_matrices_reproduce_the_forward_pass():
    weights = WeightStore.initialize(parse_architecture('6c5-2s-12c5-2s-10fc'), seed=2)
    net = build_snn(weights, PARAMS)
    x = np.random.default_rng(0).uniform(0, 0.5, (1, 28, 28))
    duals = forward(weights, x, ActivationKind.relu(), CombinedScale())
    inputs = [x] + [d.y for d in duals[:-1]]
    for matrix, pre, dual in zip(net.matrices, inputs, duals):
        assert np.max(np.abs(matrix @ pre.ravel() - dual.net.ravel())) < 1e-10


def test_connections_table():
    w = np.array([[0.5, 0.0, -0.25]])
    net = build_snn(WeightStore([LayerSpec(DENSE, 1)], [w], (3,)), PARAMS)
    table = net.connections(1)
    assert list(table.columns) == ['pre_id', 'post_id', 'weight']
    # zero weights are still connections
    assert list(table.weight) == [0.5, 0.0, -0.25]
    assert list(net.fan_in(1)) == [3]


def test_single_neuron_network():
    net = build_snn(WeightStore([LayerSpec(DENSE, 1)], [np.array([[0.5]])], (1,)), PARAMS)
    assert net.sizes == [1, 1]
    assert net.input_size == net.output_size == 1


def test_unsupported_layer():
    class Recurrent:
        kind = 'recurrent'
        size = 1
        token = '1r'

    weights = WeightStore([LayerSpec(DENSE, 1)], [np.array([[0.5]])], (1, 1, 1))
    weights.layers = [Recurrent()]
    with pytest.raises(UnsupportedLayerError):
        build_snn(weights, PARAMS)


def test_blank_image_is_degenerate():
    result = infer(bar_network(), np.zeros((28, 28)), duration=200.0)
    assert result.degenerate
    assert result.prediction == 0
    assert result.synaptic_events == 0
    assert all(c.sum() == 0 for c in result.layer_counts)


def test_bar_image_is_recognised_and_checkpoints_add_up():
    image = np.zeros((28, 28))
    image[10:13, 4:24] = 1.0
    checkpoints = default_checkpoints(200.0, 50.0)
    assert list(checkpoints) == [50.0, 100.0, 150.0, 200.0]
    result = infer(bar_network(), image, duration=200.0, checkpoints=checkpoints, seed=4)
    assert result.prediction == 3
    assert not result.degenerate
    assert np.all(np.diff(result.checkpoint_counts, axis=0) >= 0)
    assert np.array_equal(result.checkpoint_counts[-1], result.counts)
    assert len(result.predictions_over_time()) == 4


def test_default_checkpoints_end_at_the_duration():
    assert list(default_checkpoints(25.0, 10.0)) == [10.0, 20.0, 25.0]
    with pytest.raises(InvalidParameterError):
        default_checkpoints(25.0, 0.0)


def test_checkpoints_are_validated():
    with pytest.raises(InvalidParameterError):
        infer(bar_network(), np.zeros((28, 28)), duration=100.0, checkpoints=[50.0, 150.0])
    with pytest.raises(InvalidParameterError):
        infer(bar_network(), np.zeros((28, 28)), duration=100.0, checkpoints=[60.0, 50.0])


def test_logged_events_match_counted_events():
    weights = WeightStore.initialize(parse_architecture('2c5-4s-10fc'), seed=3)
    weights.weights[0] = np.abs(weights.weights[0]) * 2
    weights.weights[2] = np.abs(weights.weights[2])
    net = build_snn(weights, PARAMS)
    image = np.random.default_rng(1).uniform(0, 1, (28, 28))
    result = infer(net, image, duration=100.0, log_events=True, seed=2)
    assert result.layer_counts[1].sum() > 0
    assert result.logged_events == result.synaptic_events
    expected = sum(int(c @ f) for c, f in zip(result.layer_counts, net.fan_outs()))
    assert result.synaptic_events == expected


def test_silent_onset_changes_nothing():
    image = np.zeros((28, 28))
    image[4:7, 4:24] = 0.8
    net = bar_network()
    plain = infer(net, image, duration=100.0, seed=7)
    late = infer(net, image, duration=100.0, seed=7, onset=30.0)
    assert np.array_equal(plain.counts, late.counts)
    assert plain.synaptic_events == late.synaptic_events


def test_results_do_not_depend_on_the_batch():
    net = bar_network()
    images = np.zeros((3, 28, 28))
    for n, row in enumerate((4, 12, 20)):
        images[n, row:row + 3, 4:24] = 0.9
    together = simulate_batch(net, images, [0, 1, 2], 100.0, 1.0, 100.0, seed=1)
    for n in range(3):
        alone = simulate_batch(net, images[n:n + 1], [n], 100.0, 1.0, 100.0, seed=1)[0]
        assert np.array_equal(alone.counts, together[n].counts)


def test_pixels_must_be_in_range():
    with pytest.raises(InvalidParameterError):
        infer(bar_network(), np.full((28, 28), 2.0))


def test_evaluate_snn(tiny_dataset):
    dataset = Dataset(tiny_dataset.images[:20], tiny_dataset.labels[:20])
    net = bar_network()
    checkpoints = default_checkpoints(100.0, 25.0)
    one = evaluate_snn(net, dataset, duration=100.0, checkpoints=checkpoints, batch_size=7)
    two = evaluate_snn(net, dataset, duration=100.0, checkpoints=checkpoints, threads=2)
    assert one.error_rate <= 0.1
    assert one.error_rate == two.error_rate
    assert [r.prediction for r in one.results] == [r.prediction for r in two.results]
    assert list(one.accuracy_curve.time_ms) == [25.0, 50.0, 75.0, 100.0]
    assert one.accuracy_curve.accuracy.iloc[-1] == pytest.approx(one.accuracy)
    assert list(one.layer_stats.name) == ['input', '10fc']
    assert one.events_per_second() == pytest.approx(one.synaptic_events / 2.0)


def test_blank_images_are_flagged():
    dataset = Dataset(np.zeros((3, 28, 28)), [0, 1, 2])
    evaluation = evaluate_snn(bar_network(), dataset, duration=50.0)
    assert evaluation.degenerate == 3
    assert evaluation.error_rate == pytest.approx(2 / 3)


def test_energy_worked_examples():
    report = energy_estimate(8e6, 8.0, 3000.0 * 1000.0)
    assert report.joules == pytest.approx(192.0)
    assert report.watts == pytest.approx(0.064)
    assert energy_estimate(5.34e7, 8.0, 1e4 * 1000.0).joules == pytest.approx(4271.6, rel=1e-3)


def test_energy_from_layer_rates():
    rates = [np.array([10.0, 20.0]), np.array([5.0])]
    fan_out = [np.array([3, 1]), np.array([0])]
    report = energy_estimate(rates, 1.0, 1000.0, fan_out)
    assert report.events_per_second == 50.0
    assert report.joules == pytest.approx(5e-8)
    assert energy_estimate([np.zeros(2), np.zeros(1)], 1.0, 1000.0, fan_out).joules == 0.0
    with pytest.raises(InvalidParameterError):
        energy_estimate(rates, 1.0, 1000.0)


def test_energy_from_a_simulation():
    result = InferenceResult(0, np.zeros(10), 0, np.array([500.0]), np.zeros((1, 10)), 400, duration=500.0)
    assert energy_estimate(result, 8.0, 1000.0).events_per_second == 800.0


@pytest.mark.parametrize('e_syn', [0.0, -1.0])
def test_energy_needs_positive_event_energy(e_syn):
    with pytest.raises(InvalidParameterError):
        energy_estimate(1e6, e_syn, 1000.0)


def test_rate_correlation():
    correlation = rate_correlation(
        [np.array([1.0, 2.0, 3.0]), np.array([4.0, 4.0])],
        [np.array([2.0, 4.0, 6.5]), np.array([1.0, 2.0])],
    )
    assert correlation[0] > 0.99
    assert np.isnan(correlation[1])


def test_zero_kernel_convolution():
    images = np.random.default_rng(3).uniform(0, 1, (2, 8, 8))
    report = convolve_rates_experiment(np.zeros((3, 3)), images, duration=100.0)
    assert len(report.table) == 2 * 36
    assert np.all(report.table.measured_rate == 0)
    assert report.distances['relu'] == 0.0
    assert report.distances['noisy-softplus'] == 0.0
    # the fixed noise level keeps plain softplus above zero
    assert report.distances['softplus'] > 0


def test_module_serves_its_commands(outputQueue):
    snn_infer = create_snn_infer_instance(outputQueue)
    assert [c for c, _ in snn_infer.commands] == ['eval-snn', 'convolve-rates', 'energy']
