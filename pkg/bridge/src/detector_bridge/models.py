"""Torchvision detection backend.

Loads a pre-trained detection model by its torchvision name (for example
``ssd300_vgg16``, ``ssdlite320_mobilenet_v3_large`` or
``fasterrcnn_resnet50_fpn``) with default weights, and maps predicted class
indices to the weight set's category strings.
"""

from __future__ import annotations


class TorchvisionBackend:
    def __init__(self, model_name: str, threshold: float, device: str = "cpu"):
        import numpy as np
        import torch
        import torchvision

        self._np = np
        self._torch = torch
        self.threshold = threshold
        self.device = torch.device(device)

        try:
            builder = getattr(torchvision.models.detection, model_name)
        except AttributeError as exc:
            raise RuntimeError(f"unknown torchvision detection model {model_name!r}") from exc
        weights_enum = torchvision.models.get_model_weights(model_name)
        weights = weights_enum.DEFAULT
        self.categories = list(weights.meta["categories"])
        self.model = builder(weights=weights).to(self.device).eval()

    def detect(self, width: int, height: int, pixels: bytes) -> list[dict]:
        np, torch = self._np, self._torch
        array = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
        tensor = torch.from_numpy(array.copy()).permute(2, 0, 1).float() / 255.0
        with torch.no_grad():
            output = self.model([tensor.to(self.device)])[0]
        detections = []
        for box, label, score in zip(
            output["boxes"].cpu().numpy(),
            output["labels"].cpu().numpy(),
            output["scores"].cpu().numpy(),
        ):
            if score < self.threshold:
                continue
            x1, y1, x2, y2 = (float(v) for v in box)
            if x2 <= x1 or y2 <= y1:
                continue
            name = (
                self.categories[int(label)]
                if 0 <= int(label) < len(self.categories)
                else str(int(label))
            )
            detections.append(
                {"x1": x1, "y1": y1, "x2": x2, "y2": y2, "label": name, "score": float(score)}
            )
        return detections
