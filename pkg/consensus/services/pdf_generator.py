"""
PDF report for a finished game run.
Cost table, trajectory excerpt and mass history, rendered with reportlab.
"""
import io
from typing import List

import numpy as np
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import cm
from reportlab.platypus import HRFlowable, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .game import GameTrace


class RunReportGenerator:
    """Generates a PDF summary of a GameTrace."""

    PRIMARY = colors.HexColor('#3b82f6')
    SUCCESS = colors.HexColor('#22c55e')
    DANGER = colors.HexColor('#f5222d')
    DARK = colors.HexColor('#1e293b')
    GRAY = colors.HexColor('#64748b')
    LIGHT_GRAY = colors.HexColor('#f8fafc')
    BORDER = colors.HexColor('#e2e8f0')

    # Rows of the trajectory excerpt
    TRAJECTORY_ROWS = 11

    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_custom_styles()
        self.width, self.height = A4
        self.content_width = self.width - 4*cm

    def _setup_custom_styles(self):
        self.styles.add(ParagraphStyle(
            name='ReportTitle',
            parent=self.styles['Heading1'],
            fontSize=22,
            spaceAfter=10,
            alignment=TA_CENTER,
            textColor=self.DARK,
            fontName='Helvetica-Bold',
        ))
        self.styles.add(ParagraphStyle(
            name='Subtitle',
            fontSize=10,
            textColor=self.GRAY,
            alignment=TA_CENTER,
            spaceAfter=12,
        ))
        self.styles.add(ParagraphStyle(
            name='SectionHeader',
            parent=self.styles['Heading2'],
            fontSize=13,
            spaceBefore=12,
            spaceAfter=6,
            textColor=self.DARK,
            fontName='Helvetica-Bold',
        ))
        self.styles.add(ParagraphStyle(
            name='Small',
            fontSize=8,
            textColor=self.GRAY,
        ))

    def generate_report(self, trace: GameTrace, description: str = '') -> io.BytesIO:
        """Render the report into an in-memory buffer."""
        buffer = io.BytesIO()
        doc = SimpleDocTemplate(
            buffer,
            pagesize=A4,
            rightMargin=2*cm,
            leftMargin=2*cm,
            topMargin=2*cm,
            bottomMargin=2*cm,
            title=f"Consensus game run: {trace.scenario_name}",
        )

        story = []
        story.extend(self._create_header(trace, description))
        story.extend(self._create_cost_section(trace))
        story.extend(self._create_trajectory_section(trace))
        story.extend(self._create_mass_section(trace))

        doc.build(story)
        buffer.seek(0)
        return buffer

    def _create_header(self, trace: GameTrace, description: str) -> List:
        elements = [Paragraph(f"Consensus Game: {trace.scenario_name}", self.styles['ReportTitle'])]
        grid = trace.final_density.grid
        subtitle = (f"{trace.k} agent(s) | grid {grid.nx}x{grid.ny} | "
                    f"T = {trace.times[-1]:g}, dt = {trace.dt:g} | {trace.substeps} transport substeps")
        elements.append(Paragraph(subtitle, self.styles['Subtitle']))
        if description:
            elements.append(Paragraph(description, self.styles['Small']))
        elements.append(HRFlowable(width="100%", thickness=2, color=self.PRIMARY, spaceAfter=18))
        return elements

    def _table_style(self) -> TableStyle:
        return TableStyle([
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 9),
            ('TEXTCOLOR', (0, 0), (-1, 0), self.GRAY),
            ('ALIGN', (0, 0), (-1, -1), 'CENTER'),
            ('BACKGROUND', (0, 0), (-1, -1), self.LIGHT_GRAY),
            ('GRID', (0, 0), (-1, -1), 0.5, self.BORDER),
            ('TOPPADDING', (0, 0), (-1, -1), 4),
            ('BOTTOMPADDING', (0, 0), (-1, -1), 4),
        ])

    def _create_cost_section(self, trace: GameTrace) -> List:
        elements = [Paragraph("Final costs", self.styles['SectionHeader'])]
        winner = int(np.argmin(trace.final_costs))
        data = [['Agent', 'Final cost J', 'Final position']]
        for i, cost in enumerate(trace.final_costs):
            px, py = trace.positions[-1, i]
            data.append([f"P{i + 1}", f"{cost:.4f}", f"({px:.3f}, {py:.3f})"])

        table = Table(data, colWidths=[self.content_width / 3] * 3)
        style = self._table_style()
        if trace.k > 1:
            style.add('TEXTCOLOR', (1, winner + 1), (1, winner + 1), self.SUCCESS)
        table.setStyle(style)
        elements.append(table)
        elements.append(Spacer(1, 12))
        return elements

    def _create_trajectory_section(self, trace: GameTrace) -> List:
        elements = [Paragraph("Trajectory excerpt", self.styles['SectionHeader'])]
        rows = np.unique(np.linspace(0, len(trace.times) - 1, self.TRAJECTORY_ROWS).round().astype(int))
        header = ['t'] + [f"P{i + 1}" for i in range(trace.k)]
        data = [header]
        for r in rows:
            data.append([f"{trace.times[r]:.2f}"] +
                        [f"({x:.2f}, {y:.2f})" for x, y in trace.positions[r]])
        table = Table(data, colWidths=[self.content_width / len(header)] * len(header))
        table.setStyle(self._table_style())
        elements.append(table)
        elements.append(Spacer(1, 12))
        return elements

    def _create_mass_section(self, trace: GameTrace) -> List:
        elements = [Paragraph("Crowd mass", self.styles['SectionHeader'])]
        initial, final = trace.masses[0], trace.masses[-1]
        lost = initial - final
        color = self.DANGER if lost > 1e-9 * max(initial, 1.0) else self.SUCCESS
        text = (f"Initial mass {initial:.6f}, final mass {final:.6f} "
                f"(<font color='#{color.hexval()[2:]}'>"
                f"{lost:.3e} left the domain</font>). Largest Courant number {trace.max_courant:.3f}.")
        elements.append(Paragraph(text, self.styles['Normal']))
        return elements
